use crate::{Error, Result};

/// Point on the straight path from a prior draw to a return target.
pub fn interpolate(prior: f64, target: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("path time {t} outside [0, 1]")));
    }
    Ok((1.0 - t) * prior + t * target)
}

/// Velocity of the straight path; constant along it.
#[inline]
pub fn conditional_velocity(prior: f64, target: f64) -> f64 {
    target - prior
}

/// Keeps a new prediction within `delta` of the frozen one.
#[inline]
pub fn clipped_velocity(v_new: f64, v_old: f64, delta: f64) -> f64 {
    let (lo, hi) = (v_old - delta, v_old + delta);
    // written out so a NaN prediction stays NaN
    if v_new < lo {
        lo
    } else if v_new > hi {
        hi
    } else {
        v_new
    }
}

/// Per-sample clipped flow-matching loss and its derivative in `v_new`.
///
/// Loss is `max((v_new - u)^2, (v_clip - u)^2)`. `v_old` and `u` are
/// constants; the clipped branch only passes gradient while `v_new` is
/// strictly inside the band.
pub fn clipped_cfm_term(v_new: f64, v_old: f64, u: f64, delta: f64) -> (f64, f64) {
    let v_clip = clipped_velocity(v_new, v_old, delta);
    let plain = (v_new - u) * (v_new - u);
    let clipped = (v_clip - u) * (v_clip - u);
    if plain >= clipped {
        (plain, 2.0 * (v_new - u))
    } else {
        let inside = (v_new - v_old).abs() < delta;
        (clipped, if inside { 2.0 * (v_clip - u) } else { 0.0 })
    }
}
