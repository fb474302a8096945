use serde::{Deserialize, Serialize};

use super::{Analytic, Atom, Body, DistributionSpec, Empirical, Family, SplineCdf, TailPolicy};
use crate::error::Error;
use crate::mixture::GaussianMixture;
use crate::transform::{pushforward, TransformChain};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub(super) enum SpecWire {
    Analytic {
        family: Family,
        params: Vec<f64>,
        #[serde(default)]
        atoms: Vec<Atom>,
    },
    SplineCdf {
        points: Vec<(f64, f64)>,
        #[serde(default)]
        tail_policy: TailPolicy,
        #[serde(default)]
        n_equiv: Option<u32>,
        #[serde(default)]
        atoms: Vec<Atom>,
    },
    Empirical {
        values: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        atoms: Vec<Atom>,
    },
    Mixture {
        mixture: GaussianMixture,
        #[serde(default)]
        atoms: Vec<Atom>,
    },
    Transformed {
        base: Box<DistributionSpec>,
        chain: TransformChain,
        #[serde(default)]
        atoms: Vec<Atom>,
    },
}

impl TryFrom<SpecWire> for DistributionSpec {
    type Error = Error;

    fn try_from(w: SpecWire) -> Result<Self, Error> {
        let (spec, atoms) = match w {
            SpecWire::Analytic { family, params, atoms } => (DistributionSpec::analytic(family, &params)?, atoms),
            SpecWire::SplineCdf {
                points,
                tail_policy,
                n_equiv,
                atoms,
            } => (
                DistributionSpec::spline(SplineCdf::new(&points, n_equiv, tail_policy)?),
                atoms,
            ),
            SpecWire::Empirical { values, weights, atoms } => {
                (DistributionSpec::empirical(&values, weights.as_deref())?, atoms)
            }
            SpecWire::Mixture { mixture, atoms } => (DistributionSpec::mixture(mixture), atoms),
            SpecWire::Transformed { base, chain, atoms } => (pushforward(&base, &chain)?, atoms),
        };
        if atoms.is_empty() {
            Ok(spec)
        } else {
            spec.with_atoms(atoms)
        }
    }
}

impl From<DistributionSpec> for SpecWire {
    fn from(spec: DistributionSpec) -> Self {
        let atoms = spec.atoms;
        match spec.body {
            Body::Analytic(a) => SpecWire::Analytic {
                family: a.family(),
                params: Analytic::params(&a),
                atoms,
            },
            Body::SplineCdf(s) => SpecWire::SplineCdf {
                points: s.points(),
                tail_policy: s.tail_policy(),
                n_equiv: Some(s.n_equiv()),
                atoms,
            },
            Body::Empirical(Empirical { values, weights }) => SpecWire::Empirical {
                values,
                weights: Some(weights),
                atoms,
            },
            Body::Mixture(mixture) => SpecWire::Mixture { mixture, atoms },
            Body::Transformed(t) => SpecWire::Transformed {
                base: t.base,
                chain: t.chain,
                atoms,
            },
        }
    }
}
