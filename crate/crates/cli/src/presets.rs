//! Bundled reproduction configs.

pub const PRESETS: &[(&str, &str)] = &[
    ("torus", include_str!("../presets/torus.cfg")),
    ("exp1", include_str!("../presets/exp1.cfg")),
    ("exp2", include_str!("../presets/exp2.cfg")),
    ("exp3", include_str!("../presets/exp3.cfg")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn lookup(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
