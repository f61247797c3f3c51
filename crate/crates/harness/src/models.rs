use pspf::filters::FilterKind;
use pspf::zoo::{AugmentedSquaredObs, CevModel, CevParams, LinearMixtureModel, SquaredObsModel};
use pspf::StateSpaceModel;

use crate::config::{ModelSpec, Representation};
use crate::error::{invalid, Result};

/// The configured model in every representation the filters may need.
pub enum ModelSet {
    LinearMixture(LinearMixtureModel),
    SquaredObs {
        original: SquaredObsModel,
        augmented: AugmentedSquaredObs,
    },
    Cev(CevModel),
}

impl ModelSet {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let wrap = |e: pspf::PspfError| invalid(format!("model: {e}"));
        Ok(match spec {
            ModelSpec::LinearMixture { dim, xi } => ModelSet::LinearMixture(LinearMixtureModel::new(*dim, *xi).map_err(wrap)?),
            ModelSpec::SquaredObs { split } => ModelSet::SquaredObs {
                original: SquaredObsModel::new(),
                augmented: SquaredObsModel::augmented(*split).map_err(wrap)?,
            },
            ModelSpec::Cev { theta } => {
                ModelSet::Cev(CevModel::new(CevParams::from_log(theta).map_err(wrap)?).map_err(wrap)?)
            }
        })
    }

    /// The model data are simulated from.
    pub fn original(&self) -> &dyn StateSpaceModel {
        match self {
            ModelSet::LinearMixture(m) => m,
            ModelSet::SquaredObs { original, .. } => original,
            ModelSet::Cev(m) => m,
        }
    }

    /// Dimension of the original state; augmented states extend it.
    pub fn base_dim(&self) -> usize {
        self.original().dim_state()
    }

    /// The representation a filter runs on.
    pub fn for_filter(&self, kind: FilterKind, repr: Option<Representation>) -> Result<&dyn StateSpaceModel> {
        match self {
            ModelSet::SquaredObs { original, augmented } => {
                let needs_linear = matches!(kind, FilterKind::Pspf | FilterKind::Enkf | FilterKind::MisePre);
                let augment = match repr {
                    Some(r) => r == Representation::Augmented,
                    None => needs_linear,
                };
                Ok(if augment { augmented } else { original })
            }
            _ if repr == Some(Representation::Augmented) => {
                Err(invalid("only the squared-observation model has an augmented representation"))
            }
            other => Ok(other.original()),
        }
    }
}
