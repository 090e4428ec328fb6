//! Price CSV ingestion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Demeaned daily log returns in percent: `y_t = 100(r_t - r̄)` with
/// `r_t = log(P_t / P_{t-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsSeries {
    /// Date of the closing price of each return (first column of the file).
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
}

impl ReturnsSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

fn row_error(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Ingest {
        line,
        msg: msg.into(),
    }
}

/// Reads `path` (header row required) and converts the `price_column` to
/// returns. The first column is carried through as the date unless it is
/// the price column itself.
pub fn load_returns_csv(path: &Path, price_column: &str) -> Result<ReturnsSeries, HarnessError> {
    let file = std::fs::File::open(path)?;
    read_returns(file, price_column)
}

pub fn read_returns<R: std::io::Read>(
    reader: R,
    price_column: &str,
) -> Result<ReturnsSeries, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| row_error(1, e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == price_column)
        .ok_or_else(|| row_error(1, format!("no column named `{price_column}`")))?;
    let date_col = (col != 0).then_some(0);

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| row_error(line, e.to_string()))?;
        let field = rec
            .get(col)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| row_error(line, "missing price"))?;
        let p: f64 = field
            .parse()
            .map_err(|_| row_error(line, format!("unparsable price `{field}`")))?;
        if !(p > 0.0 && p.is_finite()) {
            return Err(row_error(line, format!("price {p} is not strictly positive")));
        }
        prices.push(p);
        dates.push(date_col.and_then(|c| rec.get(c)).unwrap_or("").trim().to_string());
    }
    if prices.len() < 2 {
        return Err(row_error(
            prices.len() + 1,
            "at least two prices are needed for one return",
        ));
    }
    let raw: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(ReturnsSeries {
        dates: dates.split_off(1),
        returns: raw.iter().map(|r| 100.0 * (r - mean)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ReturnsSeries, HarnessError> {
        read_returns(text.as_bytes(), "close")
    }

    #[test]
    fn flat_prices_give_zero_returns() {
        let r = parse("date,close\nd1,100\nd2,100\nd3,100\n").unwrap();
        assert_eq!(r.returns, vec![0.0, 0.0]);
        assert_eq!(r.dates, vec!["d2", "d3"]);
    }

    #[test]
    fn single_return_is_demeaned_to_zero() {
        let r = parse("date,close\nd1,100\nd2,110\n").unwrap();
        assert_eq!(r.returns, vec![0.0]);
    }

    #[test]
    fn hand_computed_returns() {
        let r = parse("date,close\nd1,100\nd2,110\nd3,99\n").unwrap();
        // Raw: 100 ln 1.1 = 9.531018, 100 ln 0.9 = -10.536052; mean -0.502517.
        let want = [9.531018 + 0.502517, -10.536052 + 0.502517];
        for (a, b) in r.returns.iter().zip(want) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!(r.returns.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn bad_rows_name_their_line() {
        for (text, line) in [
            ("date,close\nd1,100\nd2,-1\n", 3),
            ("date,close\nd1,100\nd2,\n", 3),
            ("date,close\nd1,abc\nd2,100\n", 2),
            ("date,open\nd1,100\n", 1),
        ] {
            match parse(text) {
                Err(HarnessError::Ingest { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn returns_are_mean_zero_and_one_shorter(prices in proptest::collection::vec(0.01f64..1e4, 2..200)) {
            let mut text = String::from("date,close\n");
            for (i, p) in prices.iter().enumerate() {
                text.push_str(&format!("d{i},{p}\n"));
            }
            let r = parse(&text).unwrap();
            proptest::prop_assert_eq!(r.len(), prices.len() - 1);
            proptest::prop_assert_eq!(r.dates.len(), r.len());
            let mean = r.returns.iter().sum::<f64>() / r.len() as f64;
            proptest::prop_assert!(mean.abs() < 1e-10, "mean {}", mean);
        }
    }
}
