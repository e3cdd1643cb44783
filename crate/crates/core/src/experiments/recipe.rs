use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EvalSample;
use crate::error::{Result, XperError};
use crate::models::{cross_validate_depth, fit_cart, fit_logit, fit_ols, fit_probit, CartConfig, GlmOptions, ModelAdapter};

/// How to fit a built-in model on a training partition.
///
/// Text form: `ols`, `probit`, `logit`, or `cart[:key=value,...]` with keys
/// `depth`, `depths` (`a-b`), `folds`, `min_depth` and `min_leaf`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelRecipe {
    Ols,
    Probit,
    Logit,
    /// Depth is picked by stratified `folds`-fold validation AUC when more
    /// than one candidate is given and `folds >= 2`; otherwise the largest
    /// candidate is used.
    Cart {
        depths: Vec<usize>,
        min_depth: Option<usize>,
        min_leaf: usize,
        folds: usize,
    },
}

impl ModelRecipe {
    pub fn cart(depth: usize) -> Self {
        ModelRecipe::Cart {
            depths: vec![depth],
            min_depth: None,
            min_leaf: 1,
            folds: 0,
        }
    }

    pub fn fit(&self, train: &EvalSample<f64>, seed: u64) -> Result<ModelAdapter<f64>> {
        Ok(match self {
            ModelRecipe::Ols => fit_ols(train, true)?.into(),
            ModelRecipe::Probit => fit_probit(train, &GlmOptions::default())?.into(),
            ModelRecipe::Logit => fit_logit(train, &GlmOptions::default())?.into(),
            ModelRecipe::Cart {
                depths,
                min_depth,
                min_leaf,
                folds,
            } => {
                let base = CartConfig {
                    max_depth: depths.iter().copied().max().unwrap_or(0),
                    min_depth: *min_depth,
                    min_leaf: *min_leaf,
                    seed,
                };
                let max_depth = if depths.len() > 1 && *folds >= 2 {
                    cross_validate_depth(train, depths, *folds, &base, seed)?
                } else {
                    base.max_depth
                };
                fit_cart(train, &CartConfig { max_depth, ..base })?.into()
            }
        })
    }
}

impl fmt::Display for ModelRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRecipe::Ols => f.write_str("ols"),
            ModelRecipe::Probit => f.write_str("probit"),
            ModelRecipe::Logit => f.write_str("logit"),
            ModelRecipe::Cart {
                depths,
                min_depth,
                min_leaf,
                folds,
            } => {
                let lo = depths.iter().min().copied().unwrap_or(0);
                let hi = depths.iter().max().copied().unwrap_or(0);
                if lo == hi {
                    write!(f, "cart:depth={hi}")?;
                } else {
                    write!(f, "cart:depths={lo}-{hi},folds={folds}")?;
                }
                if let Some(m) = min_depth {
                    write!(f, ",min_depth={m}")?;
                }
                write!(f, ",min_leaf={min_leaf}")
            }
        }
    }
}

impl FromStr for ModelRecipe {
    type Err = XperError;

    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "ols" | "probit" | "logit" if !tail.is_empty() => {
                Err(XperError::Config(format!("`{head}` takes no options")))
            }
            "ols" => Ok(ModelRecipe::Ols),
            "probit" => Ok(ModelRecipe::Probit),
            "logit" => Ok(ModelRecipe::Logit),
            "cart" => {
                let mut depths = vec![CartConfig::default().max_depth];
                let mut min_depth = None;
                let mut min_leaf = 1;
                let mut folds = 5;
                let bad = |kv: &str| XperError::Config(format!("bad cart option `{kv}`"));
                for kv in tail.split(',').filter(|p| !p.is_empty()) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(kv))?;
                    let num = |v: &str| v.parse::<usize>().map_err(|_| bad(kv));
                    match k {
                        "depth" => depths = vec![num(v)?],
                        "depths" => {
                            let (a, b) = v.split_once('-').ok_or_else(|| bad(kv))?;
                            let (a, b) = (num(a)?, num(b)?);
                            if a == 0 || a > b {
                                return Err(bad(kv));
                            }
                            depths = (a..=b).collect();
                        }
                        "folds" => folds = num(v)?,
                        "min_depth" => min_depth = Some(num(v)?),
                        "min_leaf" => min_leaf = num(v)?,
                        _ => return Err(bad(kv)),
                    }
                }
                Ok(ModelRecipe::Cart {
                    depths,
                    min_depth,
                    min_leaf,
                    folds,
                })
            }
            _ => Err(XperError::Config(format!("unknown model `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        assert_eq!("probit".parse::<ModelRecipe>().unwrap(), ModelRecipe::Probit);
        let r: ModelRecipe = "cart:depths=1-5,folds=5,min_leaf=2".parse().unwrap();
        assert_eq!(
            r,
            ModelRecipe::Cart {
                depths: vec![1, 2, 3, 4, 5],
                min_depth: None,
                min_leaf: 2,
                folds: 5
            }
        );
        assert_eq!(r.to_string().parse::<ModelRecipe>().unwrap(), r);
        assert_eq!(ModelRecipe::cart(4).to_string(), "cart:depth=4,min_leaf=1");
        assert!("cart:depth".parse::<ModelRecipe>().is_err());
        assert!("forest".parse::<ModelRecipe>().is_err());
        assert!("ols:x=1".parse::<ModelRecipe>().is_err());
    }
}
