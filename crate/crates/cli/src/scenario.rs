//! Scenario files: a flat `key = value` text format with `#` comments.
//! Nesting uses dotted keys (`solver.segments = 12`), lists are
//! comma-separated, and point lists use `;` between points.

use std::collections::BTreeMap;
use std::path::Path;

use ccgeo::error::{GeoError, Result};
use ccgeo::metric::CCSolverConfig;
use ccgeo::{Distribution, Domain, FinslerNorm};
use nalgebra::DVector;

#[derive(Debug, Clone, Default)]
pub struct Scenario {
    entries: BTreeMap<String, String>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                GeoError::InvalidInput(format!(
                    "scenario line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                ))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Scenario { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GeoError::InvalidInput(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        Scenario::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| GeoError::InvalidInput(format!("scenario is missing '{key}'")))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| GeoError::InvalidInput(format!("bad number for '{key}': '{v}'")))
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| GeoError::InvalidInput(format!("bad integer for '{key}': '{v}'")))
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| GeoError::InvalidInput(format!("bad integer for '{key}': '{v}'")))
            })
            .transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_f64_list(key, v)).transpose()
    }

    pub fn point(&self, key: &str) -> Result<Option<DVector<f64>>> {
        Ok(self.f64_list(key)?.map(DVector::from_vec))
    }

    pub fn require_point(&self, key: &str) -> Result<DVector<f64>> {
        self.point(key)?
            .ok_or_else(|| GeoError::InvalidInput(format!("scenario is missing '{key}'")))
    }

    /// `;`-separated list of comma-separated vectors.
    pub fn point_list(&self, key: &str) -> Result<Option<Vec<DVector<f64>>>> {
        self.get(key)
            .map(|v| {
                v.split(';')
                    .map(|one| parse_f64_list(key, one).map(DVector::from_vec))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()
    }

    pub fn distribution(&self) -> Result<Distribution> {
        Distribution::parse(self.require("distribution")?)
    }

    pub fn norm(&self) -> Result<FinslerNorm> {
        match self.get("norm") {
            None | Some("euclidean") => Ok(FinslerNorm::euclidean()),
            Some(other) => Err(GeoError::InvalidInput(format!("unknown norm '{other}'"))),
        }
    }

    /// `domain = lo:hi, lo:hi, ...` with `grid = r` or `grid = r1,r2,...`.
    pub fn domain(&self) -> Result<Domain> {
        let spec = self.require("domain")?;
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for axis in spec.split(',') {
            let (lo, hi) = axis.trim().split_once(':').ok_or_else(|| {
                GeoError::InvalidInput(format!("bad domain axis '{axis}', expected lo:hi"))
            })?;
            lower.push(lo.trim().parse::<f64>().map_err(|_| {
                GeoError::InvalidInput(format!("bad domain bound '{lo}'"))
            })?);
            upper.push(hi.trim().parse::<f64>().map_err(|_| {
                GeoError::InvalidInput(format!("bad domain bound '{hi}'"))
            })?);
        }
        let n = lower.len();
        let grid = match self.get("grid") {
            None => vec![9; n],
            Some(v) => {
                let parts: Vec<usize> = v
                    .split(',')
                    .map(|g| {
                        g.trim().parse::<usize>().map_err(|_| {
                            GeoError::InvalidInput(format!("bad grid entry '{g}'"))
                        })
                    })
                    .collect::<Result<_>>()?;
                if parts.len() == 1 {
                    vec![parts[0]; n]
                } else {
                    parts
                }
            }
        };
        Domain::new(DVector::from_vec(lower), DVector::from_vec(upper), grid)
    }

    /// Seed resolution: the `--seed` flag wins over the scenario key. The
    /// stochastic commands require one of them.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        self.u64("seed")?.ok_or_else(|| {
            GeoError::InvalidInput("a seed is required (scenario 'seed' or --seed)".into())
        })
    }

    pub fn solver_config(&self, seed: u64) -> Result<CCSolverConfig> {
        let mut cfg = CCSolverConfig::default().with_seed(seed);
        if let Some(v) = self.usize("solver.segments")? {
            cfg.segments = v;
        }
        if let Some(v) = self.usize("solver.restarts")? {
            cfg.restarts = v;
        }
        if let Some(v) = self.usize("solver.sweeps")? {
            cfg.max_sweeps = v;
        }
        if let Some(v) = self.f64_list("solver.penalties")? {
            cfg.penalties = v;
        }
        if let Some(v) = self.f64("solver.tolerance")? {
            cfg.endpoint_tolerance = v;
        }
        if let Some(v) = self.usize("solver.substeps")? {
            cfg.substeps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_f64_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| GeoError::InvalidInput(format!("bad number in '{key}': '{v}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let s = Scenario::parse(
            "# comment\ndistribution = heisenberg\np = 0, 0, 0.25  # inline\nsolver.penalties = 10,100\n",
        )
        .unwrap();
        assert_eq!(s.get("distribution"), Some("heisenberg"));
        assert_eq!(
            s.point("p").unwrap().unwrap(),
            DVector::from_vec(vec![0.0, 0.0, 0.25])
        );
        assert_eq!(s.f64_list("solver.penalties").unwrap().unwrap(), vec![10.0, 100.0]);
    }

    #[test]
    fn domain_parsing_with_uniform_grid() {
        let s = Scenario::parse("domain = -1:1, -2:2\ngrid = 5\n").unwrap();
        let d = s.domain().unwrap();
        assert_eq!(d.dimension(), 2);
        assert_eq!(d.grid_resolution(), &[5, 5]);
        assert_eq!(d.upper()[1], 2.0);
    }

    #[test]
    fn seed_flag_overrides_scenario() {
        let s = Scenario::parse("seed = 7\n").unwrap();
        assert_eq!(s.seed(None).unwrap(), 7);
        assert_eq!(s.seed(Some(9)).unwrap(), 9);
        let empty = Scenario::parse("").unwrap();
        assert!(empty.seed(None).is_err());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Scenario::parse("just words\n").is_err());
    }
}
