use crate::config::Experiment;

pub struct Preset {
    pub id: &'static str,
    pub experiment: Experiment,
    pub provenance: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        id: "remark-smaller",
        experiment: Experiment::Lln,
        provenance: "X_k = -ξ_k(ξ_{k+1} + 2), ξ maximal on [-1, 1]: Γ_2 is strictly smaller than Γ_1",
    },
    Preset {
        id: "one-dependent",
        experiment: Experiment::Mixing,
        provenance: "X_k = ξ_k + ξ_{k+1} with zero-mean steps ±1 or ±2: a 1-dependent sequence",
    },
    Preset {
        id: "exA-block",
        experiment: Experiment::Ergodic,
        provenance: "shift point with dyadic half-blocks of zeros and ones: Birkhoff averages oscillate",
    },
    Preset {
        id: "rotation-golden",
        experiment: Experiment::Ergodic,
        provenance: "circle rotation by the golden mean: uniquely ergodic under Lebesgue measure",
    },
    Preset {
        id: "gou",
        experiment: Experiment::Gsde,
        provenance: "G-Ornstein-Uhlenbeck dX = -X dt + dB, variance control in [1, 4]: dissipative with rate 1",
    },
    Preset {
        id: "cubic",
        experiment: Experiment::Gsde,
        provenance: "dX = -(X + X^3) dt + dB, variance control in [1, 4]: nonlinear dissipative drift",
    },
];

pub fn find(id: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.id == id)
}

pub fn catalog() -> String {
    let width = PRESETS.iter().map(|p| p.id.len()).max().unwrap_or(0);
    PRESETS
        .iter()
        .map(|p| format!("{:width$}  {:8}  {}\n", p.id, p.experiment.name(), p.provenance))
        .collect()
}
