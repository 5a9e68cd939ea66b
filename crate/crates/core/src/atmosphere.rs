//! International standard atmosphere, troposphere layer.

/// K
pub const T0: f64 = 288.15;
/// K/m
pub const L0: f64 = 0.0065;
/// Pa
pub const P0: f64 = 101_325.0;
/// J/(mol·K)
pub const R_GAS: f64 = 8.31446;
/// m/s²
pub const G0: f64 = 9.80665;
/// kg/mol
pub const MOLAR_MASS: f64 = 0.0289652;

fn exponent() -> f64 {
    R_GAS * L0 / (G0 * MOLAR_MASS)
}

/// Altitude above the reference level for a static pressure reading.
pub fn altitude_from_pressure(pressure: f64) -> f64 {
    T0 / L0 * (1.0 - (pressure / P0).powf(exponent()))
}

pub fn pressure_from_altitude(h: f64) -> f64 {
    P0 * (1.0 - h * L0 / T0).powf(1.0 / exponent())
}
