//! Builds systems, fields and drifts from configuration.

use std::sync::Arc;

use thiserror::Error;
use zext_core::billiard::{Billiard, BilliardConfig, BilliardError, Disk};
use zext_core::field::{Drift, FieldError, LevelProfile, ProductField, StateFactor};
use zext_core::shift::{CylinderFn, DyadicShift};

use crate::config::{DriftConfig, ExperimentConfig, HConfig, SystemConfig};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("geometry: {0}")]
    Geometry(#[from] BilliardError),
    #[error("field: {0}")]
    Field(#[from] FieldError),
    #[error("{0}")]
    Unsupported(String),
}

pub enum SystemHandle {
    Toy(DyadicShift),
    Billiard(Box<Billiard>),
}

pub fn build_system(cfg: &ExperimentConfig) -> Result<SystemHandle, BuildError> {
    match &cfg.system {
        SystemConfig::Toy => Ok(SystemHandle::Toy(DyadicShift)),
        SystemConfig::Billiard { disks, horizon_cap, symmetry_required } => {
            let disks = disks
                .iter()
                .map(|d| Disk { center: d.center, radius: d.radius })
                .collect();
            let bc = BilliardConfig::new(disks, *horizon_cap, *symmetry_required)?;
            Ok(SystemHandle::Billiard(Box::new(Billiard::new(bc))))
        }
    }
}

fn drift_of(cfg: &ExperimentConfig) -> Drift {
    match cfg.drift {
        DriftConfig::Zero => Drift::Zero(cfg.run.dim),
        DriftConfig::LinearDecay { rate } => Drift::linear_decay(cfg.run.dim, rate),
        DriftConfig::Rotation { rate } => Drift::rotation(rate),
    }
}

fn psi_of(cfg: &ExperimentConfig) -> Result<LevelProfile, BuildError> {
    Ok(LevelProfile::new(cfg.field.psi.support_min, cfg.field.psi.weights.clone())?)
}

pub fn build_toy_field(cfg: &ExperimentConfig) -> Result<ProductField<DyadicShift>, BuildError> {
    let h = match &cfg.field.h {
        HConfig::StepSign => CylinderFn::step_sign(),
        HConfig::Cylinder { depth, table } => CylinderFn::from_table(*depth, table.clone()),
        other => {
            return Err(BuildError::Unsupported(format!("{other:?} is not a toy observable")));
        }
    };
    Ok(zext_core::field::toy::product_field(
        StateFactor::Constant(cfg.field.amplitude.clone()),
        h,
        psi_of(cfg)?,
        drift_of(cfg),
    )?)
}

pub fn build_billiard_field(
    cfg: &ExperimentConfig,
    billiard: &Billiard,
) -> Result<ProductField<Billiard>, BuildError> {
    let bc = billiard.config().clone();
    let (h, h_sup): (Arc<dyn Fn(&mut _) -> f64 + Send + Sync>, f64) = match &cfg.field.h {
        // Both observables are odd under the sampler's symmetries, so
        // their invariant means vanish exactly.
        HConfig::AngleSine => {
            let bc = bc.clone();
            (
                Arc::new(move |s: &mut zext_core::billiard::CollisionState| {
                    s.boundary_angle(&bc).sin()
                }),
                1.0,
            )
        }
        HConfig::ThetaSine => {
            let bc = bc.clone();
            (
                Arc::new(move |s: &mut zext_core::billiard::CollisionState| {
                    s.outgoing_angle(&bc).sin()
                }),
                1.0,
            )
        }
        other => {
            return Err(BuildError::Unsupported(format!(
                "{other:?} is not a billiard observable"
            )));
        }
    };
    Ok(ProductField::new(
        StateFactor::Constant(cfg.field.amplitude.clone()),
        h,
        h_sup,
        0.0,
        psi_of(cfg)?,
        drift_of(cfg),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PsiConfig;

    #[test]
    fn builds_default_toy() {
        let cfg = ExperimentConfig::default_toy();
        assert!(matches!(build_system(&cfg).unwrap(), SystemHandle::Toy(_)));
        build_toy_field(&cfg).unwrap();
    }

    #[test]
    fn builds_billiard_with_field() {
        let mut cfg = ExperimentConfig::default_toy();
        cfg.system = SystemConfig::Billiard {
            disks: vec![
                crate::config::DiskConfig { center: [0.0, 0.0], radius: 0.4 },
                crate::config::DiskConfig { center: [0.5, 0.5], radius: 0.3 },
            ],
            horizon_cap: 3.0,
            symmetry_required: true,
        };
        cfg.field.h = HConfig::AngleSine;
        let SystemHandle::Billiard(b) = build_system(&cfg).unwrap() else {
            panic!("expected billiard");
        };
        build_billiard_field(&cfg, &b).unwrap();
    }

    #[test]
    fn uncentered_field_is_rejected_at_build() {
        let mut cfg = ExperimentConfig::default_toy();
        // h = const 1 with psi = 1_{a=0}: not centered.
        cfg.field.h = HConfig::Cylinder { depth: 0, table: vec![1.0] };
        cfg.field.psi = PsiConfig { support_min: 0, weights: vec![1.0] };
        assert!(matches!(build_toy_field(&cfg), Err(BuildError::Field(_))));
    }
}
