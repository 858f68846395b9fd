use super::ParamPoint;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// The four predator-prey reactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reaction {
    /// rate theta1 X Y, X += 1
    PredatorBirth,
    /// rate theta2 X, X -= 1
    PredatorDeath,
    /// rate theta3 Y, Y += 1
    PreyBirth,
    /// rate theta4 X Y, Y -= 1
    PreyDeath,
}

impl Reaction {
    pub fn apply(self, x: &mut u64, y: &mut u64) {
        match self {
            Reaction::PredatorBirth => *x += 1,
            Reaction::PredatorDeath => *x -= 1,
            Reaction::PreyBirth => *y += 1,
            Reaction::PreyDeath => *y -= 1,
        }
    }
}

/// One Gillespie event from state `(x, y)`: the waiting time and the reaction,
/// or `None` when every rate is zero (absorbing state).
pub fn gillespie_step(
    theta: &[f64],
    x: u64,
    y: u64,
    stream: &mut RngStream,
) -> Option<(f64, Reaction)> {
    let (xf, yf) = (x as f64, y as f64);
    let rates = [
        theta[0] * xf * yf,
        theta[1] * xf,
        theta[2] * yf,
        theta[3] * xf * yf,
    ];
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let wait = stream.exponential(total);
    let pick = stream.uniform() * total;
    let mut acc = 0.0;
    let mut chosen = Reaction::PreyDeath;
    for (rate, reaction) in rates.iter().zip([
        Reaction::PredatorBirth,
        Reaction::PredatorDeath,
        Reaction::PreyBirth,
        Reaction::PreyDeath,
    ]) {
        acc += rate;
        if pick < acc && *rate > 0.0 {
            chosen = reaction;
            break;
        }
    }
    Some((wait, chosen))
}

pub(super) struct LvConfig {
    pub x0: u64,
    pub y0: u64,
    pub points: usize,
    pub dt: f64,
    pub horizon: f64,
    pub cap: f64,
}

/// One trajectory recorded on the grid `0, dt, ..., horizon`, laid out as
/// `[X_1..X_T, Y_1..Y_T]`. Extinct runs keep their absorbing state.
pub(super) fn simulate_one(
    cfg: &LvConfig,
    theta: &ParamPoint,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let t_pts = cfg.points;
    let mut xs = Vec::with_capacity(t_pts);
    let mut ys = Vec::with_capacity(t_pts);
    let (mut x, mut y) = (cfg.x0, cfg.y0);
    let mut t = 0.0;
    let grid = |i: usize| i as f64 * cfg.dt;

    while xs.len() < t_pts {
        match gillespie_step(theta, x, y, stream) {
            None => {
                while xs.len() < t_pts {
                    xs.push(x as f64);
                    ys.push(y as f64);
                }
            }
            Some((wait, reaction)) => {
                let t_next = t + wait;
                while xs.len() < t_pts && grid(xs.len()) < t_next {
                    xs.push(x as f64);
                    ys.push(y as f64);
                }
                if t_next > cfg.horizon {
                    while xs.len() < t_pts {
                        xs.push(x as f64);
                        ys.push(y as f64);
                    }
                    break;
                }
                reaction.apply(&mut x, &mut y);
                t = t_next;
                if x as f64 > cfg.cap || y as f64 > cfg.cap {
                    return Err(Error::Explosion {
                        cap: cfg.cap,
                        recorded: xs.len(),
                        theta: theta.0.clone(),
                    });
                }
            }
        }
    }
    xs.extend(ys);
    Ok(xs)
}
