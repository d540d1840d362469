use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Identity,
}

impl Distribution {
    pub fn canonical_link(self) -> Link {
        match self {
            Distribution::Binary => Link::Logit,
            Distribution::Continuous => Link::Identity,
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Distribution::Binary),
            "continuous" => Ok(Distribution::Continuous),
            other => Err(Error::Config(format!(
                "unknown distribution '{other}' (expected binary or continuous)"
            ))),
        }
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "identity" => Ok(Link::Identity),
            other => Err(Error::Config(format!(
                "unknown link '{other}' (expected logit or identity)"
            ))),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Binary => "binary",
            Distribution::Continuous => "continuous",
        })
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Identity => "identity",
        })
    }
}

/// Outcome and mediator families. Binary pairs with logit, continuous with
/// identity; any other pairing is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dist_y: Distribution,
    pub dist_m: Distribution,
    pub link_y: Link,
    pub link_m: Link,
}

impl ModelSpec {
    pub fn new(
        dist_y: Distribution,
        dist_m: Distribution,
        link_y: Link,
        link_m: Link,
    ) -> Result<Self> {
        for (what, dist, link) in [("outcome", dist_y, link_y), ("mediator", dist_m, link_m)] {
            if dist.canonical_link() != link {
                return Err(Error::Config(format!(
                    "{what}: {dist} distribution requires the {} link, got {link}",
                    dist.canonical_link()
                )));
            }
        }
        Ok(Self {
            dist_y,
            dist_m,
            link_y,
            link_m,
        })
    }

    /// Spec with canonical links.
    pub fn canonical(dist_y: Distribution, dist_m: Distribution) -> Self {
        Self {
            dist_y,
            dist_m,
            link_y: dist_y.canonical_link(),
            link_m: dist_m.canonical_link(),
        }
    }

    pub fn all() -> [ModelSpec; 4] {
        use Distribution::*;
        [
            Self::canonical(Continuous, Continuous),
            Self::canonical(Binary, Binary),
            Self::canonical(Continuous, Binary),
            Self::canonical(Binary, Continuous),
        ]
    }

    pub fn outcome_binary(&self) -> bool {
        self.dist_y == Distribution::Binary
    }

    pub fn mediator_binary(&self) -> bool {
        self.dist_m == Distribution::Binary
    }
}
