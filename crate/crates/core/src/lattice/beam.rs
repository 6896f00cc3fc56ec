use crate::error::{Error, Result};

/// Reference particle of a sequence. Energies in GeV.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub particle: String,
    pub mass: f64,
    pub charge: f64,
    pub energy: f64,
    pub pc: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

/// Rest mass in GeV and charge in units of e.
pub fn particle_data(name: &str) -> Option<(f64, f64)> {
    match name {
        "proton" => Some((0.938_272_088_16, 1.0)),
        "antiproton" => Some((0.938_272_088_16, -1.0)),
        "electron" => Some((0.510_998_950e-3, -1.0)),
        "positron" => Some((0.510_998_950e-3, 1.0)),
        _ => None,
    }
}

impl Beam {
    /// Beam from the total energy.
    pub fn from_energy(particle: &str, energy: f64) -> Result<Self> {
        let (mass, charge) = Self::lookup(particle)?;
        if !(energy > mass) {
            return Err(Error::Lattice(format!(
                "beam energy {energy} GeV does not exceed the {particle} mass {mass} GeV"
            )));
        }
        Ok(Self::build(particle, mass, charge, energy))
    }

    /// Beam from the momentum times c.
    pub fn from_pc(particle: &str, pc: f64) -> Result<Self> {
        let (mass, charge) = Self::lookup(particle)?;
        if !(pc > 0.0) {
            return Err(Error::Lattice(format!("beam pc must be positive, got {pc}")));
        }
        Ok(Self::build(particle, mass, charge, pc.hypot(mass)))
    }

    pub fn from_gamma(particle: &str, gamma: f64) -> Result<Self> {
        let (mass, _) = Self::lookup(particle)?;
        Self::from_energy(particle, gamma * mass)
    }

    fn lookup(particle: &str) -> Result<(f64, f64)> {
        particle_data(particle)
            .ok_or_else(|| Error::Lattice(format!("unknown particle '{particle}'")))
    }

    fn build(particle: &str, mass: f64, charge: f64, energy: f64) -> Self {
        let pc = ((energy - mass) * (energy + mass)).sqrt();
        Beam {
            particle: particle.to_string(),
            mass,
            charge,
            energy,
            pc,
            beta0: pc / energy,
            gamma0: energy / mass,
        }
    }
}

impl Default for Beam {
    /// 450 GeV protons.
    fn default() -> Self {
        Beam::from_energy("proton", 450.0).expect("valid default beam")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let b = Beam::from_energy("proton", 450.0).unwrap();
        assert!((b.beta0 - b.pc / b.energy).abs() < 1e-16);
        assert!((b.gamma0 * b.mass - 450.0).abs() < 1e-12);
        let c = Beam::from_pc("positron", 182.5).unwrap();
        assert!((c.pc - 182.5).abs() < 1e-12);
        assert!(Beam::from_energy("proton", 0.5).is_err());
        assert!(Beam::from_energy("muon", 5.0).is_err());
    }
}
