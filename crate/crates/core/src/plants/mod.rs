//! Shipped plant catalog.

mod linear;
mod pancreas;
mod powertrain;
mod quadtank;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Plant, PlantModel};

pub use linear::{LinearTest, LinearTestParams};
pub use pancreas::{ArtificialPancreas, PancreasParams, GLUCOSE_MMOL_PER_GRAM};
pub use powertrain::{Powertrain, PowertrainParams};
pub use quadtank::{QuadTank, QuadTankParams};

/// Identifiers accepted by [`build_plant`].
pub const PLANT_NAMES: [&str; 4] = [
    "artificial-pancreas",
    "powertrain",
    "quad-tank",
    "linear-test",
];

/// Parameter structs whose scalar fields can be overridden by name.
pub trait Overridable {
    const PREFIX: &'static str;
    fn keys() -> &'static [&'static str];
    fn field_mut(&mut self, key: &str) -> Option<&mut f64>;

    fn apply_overrides(&mut self, plant: &str, overrides: &BTreeMap<String, f64>) -> Result<()> {
        for (key, value) in overrides {
            let short = key
                .strip_prefix(Self::PREFIX)
                .and_then(|k| k.strip_prefix('.'))
                .unwrap_or(key);
            match self.field_mut(short) {
                Some(slot) => *slot = *value,
                None => {
                    return Err(Error::UnknownOverride {
                        plant: plant.to_string(),
                        key: key.clone(),
                    })
                }
            }
        }
        Ok(())
    }
}

macro_rules! overridable {
    ($ty:ty, $prefix:literal, [$($field:ident),* $(,)?]) => {
        impl $crate::plants::Overridable for $ty {
            const PREFIX: &'static str = $prefix;
            fn keys() -> &'static [&'static str] {
                &[$(stringify!($field)),*]
            }
            fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
                match key {
                    $(stringify!($field) => Some(&mut self.$field),)*
                    _ => None,
                }
            }
        }
    };
}
pub(crate) use overridable;

/// Override keys for `name`, fully qualified (`"ap.w"`, `"qt.k1"`, ...).
pub fn override_keys(name: &str) -> Result<Vec<String>> {
    fn qualified<P: Overridable>() -> Vec<String> {
        P::keys()
            .iter()
            .map(|k| format!("{}.{k}", P::PREFIX))
            .collect()
    }
    match name {
        "artificial-pancreas" => Ok(qualified::<PancreasParams>()),
        "powertrain" => Ok(qualified::<PowertrainParams>()),
        "quad-tank" => Ok(qualified::<QuadTankParams>()),
        "linear-test" => Ok(qualified::<LinearTestParams>()),
        other => Err(Error::UnknownPlant(other.to_string())),
    }
}

/// Builds a plant model with the given parameter overrides.
pub fn build_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Arc<dyn PlantModel>> {
    fn with<P: Overridable + Default>(name: &str, overrides: &BTreeMap<String, f64>) -> Result<P> {
        let mut p = P::default();
        p.apply_overrides(name, overrides)?;
        Ok(p)
    }
    let model: Arc<dyn PlantModel> = match name {
        "artificial-pancreas" => Arc::new(ArtificialPancreas::new(with(name, overrides)?)?),
        "powertrain" => Arc::new(Powertrain::new(with(name, overrides)?)?),
        "quad-tank" => Arc::new(QuadTank::new(with(name, overrides)?)?),
        "linear-test" => Arc::new(LinearTest::new(with(name, overrides)?)?),
        other => return Err(Error::UnknownPlant(other.to_string())),
    };
    Ok(model)
}

/// Builds a plant, refines its equilibrium and attaches the safety invariant.
pub fn build_plant(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Plant> {
    Plant::new(build_model(name, overrides)?)
}

pub(crate) fn check_timing(tau: f64, horizon: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling period {tau} must be positive"
        )));
    }
    let ratio = horizon / tau;
    if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is not a positive multiple of the sampling period {tau}"
        )));
    }
    Ok(())
}

/// Normal draw with mean and variance.
pub(crate) fn normal(rng: &mut crate::model::StreamRng, mean: f64, variance: f64) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let z: f64 = StandardNormal.sample(rng);
    mean + variance.max(0.0).sqrt() * z
}
