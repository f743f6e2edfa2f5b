use super::{CraneParams, Vec5};

/// Total pump flow `Q = Σ A_l(sign ḋ_l)·|ḋ_l|` with `ḋ_l = k_l·q̇_{A,l}` (m³/s).
///
/// The cylinder stroke rate is an affine lever of the joint rate, so the
/// joint positions do not enter; `_q_a` is kept for the call signature of a
/// geometry-dependent lever.
pub fn pump_flow(params: &CraneParams, _q_a: &Vec5, qd_a: &Vec5) -> f64 {
    (0..5)
        .map(|l| {
            let dd = params.cylinder_gain[l] * qd_a[l];
            let area = if dd >= 0.0 { params.cylinder_area_pos[l] } else { params.cylinder_area_neg[l] };
            area * dd.abs()
        })
        .sum()
}

/// `∂Q/∂q̇_A`; the kink at zero velocity takes the one-sided slope of the
/// extending direction's area times zero, i.e. zero.
pub fn pump_flow_gradient(params: &CraneParams, qd_a: &Vec5) -> Vec5 {
    Vec5::from_fn(|l, _| {
        let k = params.cylinder_gain[l];
        let dd = k * qd_a[l];
        if dd > 0.0 {
            params.cylinder_area_pos[l] * k
        } else if dd < 0.0 {
            -params.cylinder_area_neg[l] * k
        } else {
            0.0
        }
    })
}
