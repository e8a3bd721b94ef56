//! Configs shipped with the binary.

use crate::config::Subcommand;

pub struct Preset {
    pub name: &'static str,
    pub subcommand: Subcommand,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "ginibre-circular-law",
        subcommand: Subcommand::Gas,
        text: include_str!("../presets/ginibre-circular-law.conf"),
    },
    Preset {
        name: "gue-semicircle",
        subcommand: Subcommand::Gas,
        text: include_str!("../presets/gue-semicircle.conf"),
    },
    Preset {
        name: "coulomb-ball-3d",
        subcommand: Subcommand::Gas,
        text: include_str!("../presets/coulomb-ball-3d.conf"),
    },
    Preset {
        name: "mm-infinity-free-energy",
        subcommand: Subcommand::Markov,
        text: include_str!("../presets/mm-infinity-free-energy.conf"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
