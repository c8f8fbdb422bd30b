use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::simgen::ScenarioConfig;

/// Grids over scenario parameters. An absent grid keeps the base value;
/// the expansion is the cartesian product of the present ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub v: Option<Vec<f64>>,
    pub d: Option<Vec<usize>>,
    pub eta: Option<Vec<f64>>,
    pub n: Option<Vec<usize>>,
}

fn grid<T: Copy>(name: &str, values: &Option<Vec<T>>, base: T) -> Result<(Vec<T>, bool)> {
    match values {
        None => Ok((vec![base], false)),
        Some(v) if v.is_empty() => Err(TcsError::Config(format!("sweep grid {name} is empty"))),
        Some(v) => Ok((v.clone(), true)),
    }
}

impl SweepSpec {
    /// The full published grid.
    pub fn paper() -> Self {
        SweepSpec {
            v: Some(vec![0.5, 1.0, 1.5, 2.0]),
            d: Some(vec![6, 10, 20, 40]),
            eta: Some(vec![0.7, 0.8, 0.9, 1.0]),
            n: Some(vec![1500, 3000, 10000]),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_none() && self.d.is_none() && self.eta.is_none() && self.n.is_none()
    }

    /// Named scenario cells, in `v`, `d`, `eta`, `n` nesting order.
    pub fn expand(&self, name: &str, base: &ScenarioConfig) -> Result<Vec<(String, ScenarioConfig)>> {
        let (vs, sv) = grid("v", &self.v, base.v)?;
        let (ds, sd) = grid("d", &self.d, base.d)?;
        let (etas, se) = grid("eta", &self.eta, base.eta)?;
        let (ns, sn) = grid("n", &self.n, base.n)?;
        let mut out = Vec::with_capacity(vs.len() * ds.len() * etas.len() * ns.len());
        for &v in &vs {
            for &d in &ds {
                for &eta in &etas {
                    for &n in &ns {
                        let cfg = ScenarioConfig {
                            v,
                            d,
                            eta,
                            n,
                            ..base.clone()
                        };
                        cfg.validate()?;
                        let mut parts = vec![name.to_string()];
                        if sv {
                            parts.push(format!("v{v}"));
                        }
                        if sd {
                            parts.push(format!("d{d}"));
                        }
                        if se {
                            parts.push(format!("eta{eta}"));
                        }
                        if sn {
                            parts.push(format!("n{n}"));
                        }
                        out.push((parts.join("_"), cfg));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_the_base() {
        let base = ScenarioConfig::default();
        let cells = SweepSpec::default().expand("default", &base).unwrap();
        assert_eq!(cells, vec![("default".to_string(), base)]);
    }

    #[test]
    fn product_size_and_names() {
        let spec = SweepSpec {
            eta: Some(vec![0.7, 1.0]),
            d: Some(vec![6, 10, 20]),
            ..SweepSpec::default()
        };
        let cells = spec.expand("s", &ScenarioConfig::default()).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].0, "s_d6_eta0.7");
        assert_eq!(cells[5].1.d, 20);
        assert_eq!(cells[5].1.eta, 1.0);
        assert_eq!(SweepSpec::paper().expand("p", &ScenarioConfig::default()).unwrap().len(), 192);
    }

    #[test]
    fn invalid_cells_rejected() {
        let empty = SweepSpec {
            v: Some(vec![]),
            ..SweepSpec::default()
        };
        assert!(empty.expand("s", &ScenarioConfig::default()).is_err());
        let bad = SweepSpec {
            eta: Some(vec![1.5]),
            ..SweepSpec::default()
        };
        assert!(bad.expand("s", &ScenarioConfig::default()).is_err());
    }
}
