use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Every single-step method the crate provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    /// One exponential, first order.
    Em1,
    /// Exponential midpoint Magnus, two exponentials.
    Em2Mid,
    /// Exponential trapezoid Magnus, two exponentials.
    Em2Trap,
    /// Midpoint Magnus with a resolvent inner stage.
    Em2MidCheap,
    /// Trapezoid Magnus with a resolvent inner stage.
    Em2TrapCheap,
    /// Strang splitting of the duplicated system with averaging.
    Es2,
    /// Third-order commutator-free Magnus, seven exponentials.
    Em3,
    /// Modified Patankar–Euler.
    Mpe,
    /// Modified Patankar–Runge–Kutta, second order.
    Mprk2,
    Euler,
    Rk4,
    Ros4,
}

impl MethodId {
    pub const ALL: [MethodId; 12] = [
        MethodId::Em1,
        MethodId::Em2Mid,
        MethodId::Em2Trap,
        MethodId::Em2MidCheap,
        MethodId::Em2TrapCheap,
        MethodId::Es2,
        MethodId::Em3,
        MethodId::Mpe,
        MethodId::Mprk2,
        MethodId::Euler,
        MethodId::Rk4,
        MethodId::Ros4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Em1 => "em1",
            MethodId::Em2Mid => "em2-mid",
            MethodId::Em2Trap => "em2-trap",
            MethodId::Em2MidCheap => "em2-mid-cheap",
            MethodId::Em2TrapCheap => "em2-trap-cheap",
            MethodId::Es2 => "es2",
            MethodId::Em3 => "em3",
            MethodId::Mpe => "mpe",
            MethodId::Mprk2 => "mprk2",
            MethodId::Euler => "euler",
            MethodId::Rk4 => "rk4",
            MethodId::Ros4 => "ros4",
        }
    }

    /// Matrix exponentials evaluated per step.
    pub fn exponentials_per_step(self) -> usize {
        match self {
            MethodId::Em1 | MethodId::Em2MidCheap | MethodId::Em2TrapCheap => 1,
            MethodId::Em2Mid | MethodId::Em2Trap => 2,
            MethodId::Es2 => 3,
            MethodId::Em3 => 7,
            MethodId::Mpe | MethodId::Mprk2 | MethodId::Euler | MethodId::Rk4 | MethodId::Ros4 => 0,
        }
    }

    /// Classical order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            MethodId::Em1 | MethodId::Mpe | MethodId::Euler => 1,
            MethodId::Em3 => 3,
            MethodId::Rk4 | MethodId::Ros4 => 4,
            _ => 2,
        }
    }

    /// Positivity (and mass, for strict problems) holds for every step size.
    pub fn unconditionally_positive(self) -> bool {
        !matches!(self, MethodId::Em3 | MethodId::Euler | MethodId::Rk4 | MethodId::Ros4)
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, MethodId::Euler | MethodId::Rk4 | MethodId::Ros4)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let id = match key.as_str() {
            "em1" => MethodId::Em1,
            "em2" | "em2-mid" => MethodId::Em2Mid,
            "em2-trap" => MethodId::Em2Trap,
            "em2-mid-cheap" => MethodId::Em2MidCheap,
            "em2-trap-cheap" => MethodId::Em2TrapCheap,
            "es2" => MethodId::Es2,
            "em3" => MethodId::Em3,
            "mpe" => MethodId::Mpe,
            "mprk2" | "mp2" => MethodId::Mprk2,
            "euler" => MethodId::Euler,
            "rk4" => MethodId::Rk4,
            "ros4" => MethodId::Ros4,
            _ => return Err(Error::Domain(format!("unknown method '{s}'"))),
        };
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(m.name().parse::<MethodId>().unwrap(), m);
        }
        assert_eq!("EM2_MID".parse::<MethodId>().unwrap(), MethodId::Em2Mid);
        assert_eq!("mp2".parse::<MethodId>().unwrap(), MethodId::Mprk2);
        assert!("em4".parse::<MethodId>().is_err());
    }
}
