//! Client datasets: parsing, plaintext reference statistics and ingestion checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::collection::KeyValuePair;
use crate::error::{Error, Result};

/// One client's pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientRecord {
    pub id: u64,
    pub pairs: Vec<KeyValuePair>,
}

/// All clients' data, ordered by client id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub clients: Vec<ClientRecord>,
}

/// Plaintext frequency and mean of one key.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PlainStat {
    pub frequency: u64,
    pub sum: f64,
}

impl PlainStat {
    pub fn mean(&self) -> Option<f64> {
        (self.frequency > 0).then(|| self.sum / self.frequency as f64)
    }
}

impl Dataset {
    pub fn new(clients: Vec<ClientRecord>) -> Self {
        Self { clients }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Total number of pairs `|S|`.
    pub fn pair_count(&self) -> usize {
        self.clients.iter().map(|c| c.pairs.len()).sum()
    }

    /// Parses `client,key,value` records. A leading header record, blank
    /// lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut by_client: BTreeMap<u64, Vec<KeyValuePair>> = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, got {}", record.len()),
                });
            }
            if i == 0 && record[0].eq_ignore_ascii_case("client") {
                continue;
            }
            let err = |what: &str, v: &str| Error::Parse {
                line,
                message: format!("bad {what} {v:?}"),
            };
            let client: u64 = record[0].parse().map_err(|_| err("client id", &record[0]))?;
            let key: u64 = record[1].parse().map_err(|_| err("key", &record[1]))?;
            let value: f64 = record[2].parse().map_err(|_| err("value", &record[2]))?;
            if !value.is_finite() {
                return Err(err("value", &record[2]));
            }
            by_client.entry(client).or_default().push(KeyValuePair { key, value });
        }
        Ok(Self {
            clients: by_client
                .into_iter()
                .map(|(id, pairs)| ClientRecord { id, pairs })
                .collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("client,key,value\n");
        for c in &self.clients {
            for p in &c.pairs {
                let _ = writeln!(out, "{},{},{}", c.id, p.key, p.value);
            }
        }
        out
    }

    /// Brute-force per-key statistics over `0..key_domain`.
    pub fn plaintext(&self, key_domain: usize) -> Vec<PlainStat> {
        let mut out = vec![PlainStat { frequency: 0, sum: 0.0 }; key_domain];
        for c in &self.clients {
            for p in &c.pairs {
                if let Some(s) = out.get_mut(p.key as usize) {
                    s.frequency += 1;
                    s.sum += p.value;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_groups_by_client() {
        let d = Dataset::parse("client,key,value\n2,1,0.5\n# note\n1,3,-1\n\n2,0,1e-3\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.clients[0].id, 1);
        assert_eq!(d.clients[1].pairs.len(), 2);
        assert_eq!(d.pair_count(), 3);
        assert_eq!(Dataset::parse(&d.to_csv()).unwrap(), d);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [("1,2\n", 1), ("1,2,3\nx,1,1\n", 2), ("1,2,nan\n", 1), ("1,-2,0\n", 1)] {
            match Dataset::parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn plaintext_oracle() {
        let d = Dataset::parse("1,0,1\n2,0,2\n3,0,3\n3,2,5\n").unwrap();
        let s = d.plaintext(3);
        assert_eq!(s[0].frequency, 3);
        assert_eq!(s[0].mean(), Some(2.0));
        assert_eq!(s[1].mean(), None);
        assert_eq!(s[2].sum, 5.0);
    }
}
