//! `key=value` configuration files. Values found here override command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use steerhier::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "preset",
    "seed",
    "count",
    "threads",
    "out",
    "certs",
    "budget.2",
    "budget.3",
    "budget.4",
    "budget.5",
    "coarse_n",
    "coarse_budget",
    "eps_psd",
    "eps_eq",
    "eps_feas",
    "margin",
    "max_iterations",
    "data",
    "model",
    "scheme",
    "epochs",
    "batch_size",
    "learning_rate",
    "momentum",
    "hidden",
    "train_seed",
    "validation_fraction",
    "patience",
    "class_weighting",
    "family",
    "source",
    "grid",
    "svg",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

impl CliConfig {
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("{}:{}: {msg}", path.display(), idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found `{line}`")))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key `{key}`")));
            }
        }
        Ok(CliConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("config key `{key}`: cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    /// The config value if present, else the flag.
    pub fn pick<T: FromStr>(&self, key: &str, flag: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(flag))
    }

    pub fn pick_opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.or(flag))
    }
}

/// Accepts plain integers and integral scientific notation such as `1e6`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

/// `NxM` with both sides at least 2.
pub fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid `{s}` must look like 32x32"))?;
    let n: usize = a.trim().parse().map_err(|_| format!("bad grid size `{a}`"))?;
    let m: usize = b.trim().parse().map_err(|_| format!("bad grid size `{b}`"))?;
    if n < 2 || m < 2 {
        return Err(format!("grid `{s}` needs at least 2 points per axis"));
    }
    Ok((n, m))
}

pub fn parse_hidden(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad hidden size `{t}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let p = Path::new("c.conf");
        let c = CliConfig::parse("# comment\nseed = 9\n\nbudget.2=50\n", p).unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(c.pick("count", 4u64).unwrap(), 4);
        assert!(CliConfig::parse("colour=red\n", p).is_err());
        assert!(CliConfig::parse("seed=1\nseed=2\n", p).is_err());
        assert!(CliConfig::parse("seed\n", p).is_err());
        assert!(c.get::<f64>("budget.2").is_ok());
        let bad = CliConfig::parse("seed=abc\n", p).unwrap();
        assert!(bad.get::<u64>("seed").is_err());
    }

    #[test]
    fn counts_and_grids() {
        assert_eq!(parse_count("100").unwrap(), 100);
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert_eq!(parse_grid("16x8").unwrap(), (16, 8));
        assert!(parse_grid("1x8").is_err());
        assert!(parse_grid("16").is_err());
        assert_eq!(parse_hidden("32, 16").unwrap(), vec![32, 16]);
    }
}
