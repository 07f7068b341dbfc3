//! Named copula families: each maps a short shape vector to a generator
//! partition for a given dimension.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dist::{GeneratorLaw, Group, GroupKind, GroupSpec};
use crate::error::{PccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CopulaFamily {
    /// All generators normal: the Gaussian copula.
    Gauss,
    /// One joint Student t block.
    Td,
    /// One joint skew t block, skewed along the first component.
    SkewTd,
    /// Hyperbolic first component, normal rest.
    HbN,
    /// Skew t first component, independent scalar t for the rest.
    SkewT1T1,
    /// Skew t first component, one joint t block for the rest.
    SkewT1Td1,
    /// Hyperbolic first and second components, normal rest.
    HbHbN,
}

/// How the first component's degrees of freedom follow the fitted `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailLink {
    /// Same degrees of freedom everywhere.
    #[default]
    Equal,
    /// First component uses `2 nu` so its heavy (skewed) tail decays like
    /// the Student tails of the others.
    CommonTail,
}

pub const ALL_FAMILIES: [CopulaFamily; 7] = [
    CopulaFamily::Gauss,
    CopulaFamily::Td,
    CopulaFamily::SkewTd,
    CopulaFamily::HbN,
    CopulaFamily::SkewT1T1,
    CopulaFamily::SkewT1Td1,
    CopulaFamily::HbHbN,
];

impl CopulaFamily {
    pub fn n_shape(self) -> usize {
        match self {
            CopulaFamily::Gauss => 0,
            CopulaFamily::Td => 1,
            CopulaFamily::HbHbN => 4,
            _ => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CopulaFamily::Gauss => "Gauss",
            CopulaFamily::Td => "t_d",
            CopulaFamily::SkewTd => "Skew t_d",
            CopulaFamily::HbN => "HB-N",
            CopulaFamily::SkewT1T1 => "Skew t1-t1",
            CopulaFamily::SkewT1Td1 => "Skew t1-t(d-1)",
            CopulaFamily::HbHbN => "HB-HB-N",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            CopulaFamily::Gauss => &[],
            CopulaFamily::Td => &["nu"],
            CopulaFamily::HbN => &["alpha", "beta"],
            CopulaFamily::HbHbN => &["alpha1", "beta1", "alpha2", "beta2"],
            _ => &["nu", "gamma"],
        }
    }

    /// Starting shape values for the optimizer.
    pub fn initial(self) -> Vec<f64> {
        match self {
            CopulaFamily::Gauss => vec![],
            CopulaFamily::Td => vec![15.0],
            CopulaFamily::HbN => vec![1.0, 0.0],
            CopulaFamily::HbHbN => vec![1.0, 0.0, 1.0, 0.0],
            _ => vec![15.0, 0.0],
        }
    }

    /// Initial simplex edge lengths.
    pub fn steps(self) -> Vec<f64> {
        match self {
            CopulaFamily::Gauss => vec![],
            CopulaFamily::Td => vec![3.0],
            CopulaFamily::HbN => vec![0.3, 0.2],
            CopulaFamily::HbHbN => vec![0.3, 0.2, 0.3, 0.2],
            _ => vec![3.0, 0.3],
        }
    }

    /// Generator partition for dimension `d` with shape vector `theta`.
    /// Rejects parameters outside the family's domain; whether the implied
    /// variances are attainable is only known once eigenvalues are given.
    pub fn spec(self, d: usize, theta: &[f64], link: TailLink) -> Result<GroupSpec> {
        if theta.len() != self.n_shape() {
            return Err(PccError::Dimension { expected: self.n_shape(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(PccError::Domain("non-finite shape parameter".into()));
        }
        let min_d = match self {
            CopulaFamily::Gauss | CopulaFamily::Td | CopulaFamily::SkewTd => 1,
            CopulaFamily::HbHbN => 3,
            _ => 2,
        };
        if d < min_d {
            return Err(PccError::Config(format!("{} needs dimension at least {min_d}", self.label())));
        }
        let hb = |a: f64, b: f64| -> Result<GeneratorLaw> {
            if !(a > b.abs()) {
                return Err(PccError::Domain(format!("hyperbolic needs alpha > |beta|, got ({a}, {b})")));
            }
            Ok(GeneratorLaw::Hyperbolic { alpha: a, beta: b })
        };
        let nu_ok = |nu: f64, skewed: bool| -> Result<()> {
            let lo = if skewed { 4.0 } else { 2.0 };
            if !(nu > lo) {
                return Err(PccError::Domain(format!("degrees of freedom must exceed {lo}, got {nu}")));
            }
            Ok(())
        };
        let first_nu = |nu: f64| match link {
            TailLink::Equal => nu,
            TailLink::CommonTail => 2.0 * nu,
        };
        let rest: Vec<usize> = (1..d).collect();
        let single = |law, i: usize| Group { law, indices: vec![i] };
        let (kind, groups) = match self {
            CopulaFamily::Gauss => return Ok(GroupSpec::gaussian(d)),
            CopulaFamily::Td => {
                nu_ok(theta[0], false)?;
                (GroupKind::CustomGroups, vec![Group { law: GeneratorLaw::SkewT { nu: theta[0], gamma: 0.0 }, indices: (0..d).collect() }])
            }
            CopulaFamily::SkewTd => {
                nu_ok(theta[0], theta[1] != 0.0)?;
                (GroupKind::CustomGroups, vec![Group { law: GeneratorLaw::SkewT { nu: theta[0], gamma: theta[1] }, indices: (0..d).collect() }])
            }
            CopulaFamily::HbN => (
                GroupKind::IndependentScalars,
                vec![single(hb(theta[0], theta[1])?, 0), Group { law: GeneratorLaw::Normal, indices: rest }],
            ),
            CopulaFamily::SkewT1T1 => {
                let nu1 = first_nu(theta[0]);
                nu_ok(nu1, theta[1] != 0.0)?;
                nu_ok(theta[0], false)?;
                let mut g = vec![single(GeneratorLaw::SkewT { nu: nu1, gamma: theta[1] }, 0)];
                g.extend(rest.iter().map(|&i| single(GeneratorLaw::SkewT { nu: theta[0], gamma: 0.0 }, i)));
                (GroupKind::IndependentScalars, g)
            }
            CopulaFamily::SkewT1Td1 => {
                let nu1 = first_nu(theta[0]);
                nu_ok(nu1, theta[1] != 0.0)?;
                nu_ok(theta[0], false)?;
                (
                    GroupKind::FirstPlusJointT,
                    vec![
                        single(GeneratorLaw::SkewT { nu: nu1, gamma: theta[1] }, 0),
                        Group { law: GeneratorLaw::SkewT { nu: theta[0], gamma: 0.0 }, indices: rest },
                    ],
                )
            }
            CopulaFamily::HbHbN => (
                GroupKind::IndependentScalars,
                vec![
                    single(hb(theta[0], theta[1])?, 0),
                    single(hb(theta[2], theta[3])?, 1),
                    Group { law: GeneratorLaw::Normal, indices: (2..d).collect() },
                ],
            ),
        };
        Ok(GroupSpec { kind, groups })
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CopulaFamily {
    type Err = PccError;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Ok(match key.as_str() {
            "gauss" | "gaussian" | "normal" => CopulaFamily::Gauss,
            "td" | "t" => CopulaFamily::Td,
            "skewtd" | "skewt" => CopulaFamily::SkewTd,
            "hbn" => CopulaFamily::HbN,
            "skewt1t1" => CopulaFamily::SkewT1T1,
            "skewt1td1" | "skewt1tdminus1" => CopulaFamily::SkewT1Td1,
            "hbhbn" => CopulaFamily::HbHbN,
            _ => return Err(PccError::Config(format!("unknown copula family '{s}'"))),
        })
    }
}
