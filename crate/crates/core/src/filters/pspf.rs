//! Filters built on the pre-smoothed update: PSPF, EnKF and MISE-Pre.

use nalgebra::DVector;

use super::{band, check_inputs, ess, initial_swarm, linear_obs, mixture_mean, propagate, resample, FilterConfig, FilterRun, Recorder, Smoothing, StepRecord};
use crate::bandwidth::{mise_plugin_b, select_with_moments};
use crate::error::{PspfError, Result};
use crate::model::StateSpaceModel;
use crate::ps_update::{ps_update_with_moments, ShrinkageParams};
use crate::rng::Purpose;

/// `b` of the MISE plug-in rule with the bandwidth multiplied by `scale`.
pub(crate) fn scaled_plugin_b(n: usize, dim: usize, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(PspfError::Domain {
            name: "plug-in bandwidth scale",
            value: scale,
            allowed: "(0, inf)",
        });
    }
    let b = mise_plugin_b(n, dim);
    let h = (1.0 / (b * b) - 1.0).sqrt() * scale;
    Ok(ShrinkageParams::from_bandwidth(h)?.b)
}

fn run_presmoothed<M: StateSpaceModel + ?Sized>(
    model: &M,
    obs: &[DVector<f64>],
    config: &FilterConfig,
    smoothing: Smoothing,
) -> Result<FilterRun> {
    let min_n = if smoothing == Smoothing::Adaptive { 4 } else { 2 };
    check_inputs(model, obs, config.n, min_n)?;
    if let Smoothing::Fixed(b) = smoothing {
        ShrinkageParams::new(b)?;
    }
    let mut rec = Recorder::new(config, obs.len());
    let mut swarm = initial_swarm(model, config);
    let mut last = None;
    for (t, y) in (1..).zip(obs) {
        let step = || -> Result<_> {
            let lin = linear_obs(model, t)?;
            let prior = propagate(model, &swarm, t, config);
            if !prior.is_finite() {
                return Err(PspfError::InvalidArgument("non-finite propagated particle".into()));
            }
            let moments = prior.moments()?;
            let (b, criterion, pilot_status) = match smoothing {
                Smoothing::Adaptive => {
                    let mut rng = config.stream(Purpose::Pilot, t);
                    let sel = select_with_moments(&prior, &moments, y.as_slice(), lin, &config.bandwidth, &mut rng)?;
                    (sel.b, Some(sel.terms), Some(sel.pilot_status))
                }
                Smoothing::Fixed(b) => (b, None, None),
                Smoothing::MisePlugIn { scale } => (scaled_plugin_b(prior.n(), prior.dim(), scale)?, None, None),
            };
            let upd = ps_update_with_moments(&prior, moments, y.as_slice(), lin, b)?;
            let (next, grid) = resample(&upd.posterior, config, t)?;
            let record = StepRecord {
                t,
                log_increment: upd.log_p_y,
                posterior_mean: mixture_mean(&upd.posterior),
                b: Some(b),
                criterion,
                pilot_status,
                ess: ess(upd.posterior.weights()),
                band: band(&upd.posterior, config.band_coordinate)?,
                grid,
            };
            Ok((record, next, upd.posterior))
        };
        let (record, next, posterior) = step().map_err(|e| e.at_step(t))?;
        swarm = next;
        rec.push(record, &swarm);
        last = Some(posterior);
    }
    Ok(rec.finish(last.expect("at least one observation")))
}

/// Pre-smoothed particle filter with the smoothing chosen by `config.smoothing`.
pub fn run_pspf<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    run_presmoothed(model, obs, config, config.smoothing)
}

/// Ensemble Kalman filter: the pre-smoothed filter with `b = 0` at every step.
pub fn run_enkf<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    run_presmoothed(model, obs, config, Smoothing::Fixed(0.0))
}

/// Pre-smoothed filter with `b` from the MISE plug-in rule. A
/// `Smoothing::MisePlugIn` in `config` sets the bandwidth scale; any other
/// choice uses scale 1.
pub fn run_mise_pre<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    let scale = match config.smoothing {
        Smoothing::MisePlugIn { scale } => scale,
        _ => 1.0,
    };
    run_presmoothed(model, obs, config, Smoothing::MisePlugIn { scale })
}
