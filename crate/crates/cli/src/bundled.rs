//! Scenarios shipped with the binary.

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        /// `(name, TOML source)` of every bundled scenario.
        pub const SCENARIOS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*
        ];
    };
}

bundled!(
    "sway_free_space_on",
    "sway_free_space_off",
    "sway_triple_pull_on",
    "sway_triple_pull_off",
    "sway_near_obstacle_on",
    "sway_near_obstacle_off",
    "stop_blocked",
    "bypass_one",
    "bypass_two",
    "narrow_gap_on",
    "narrow_gap_off",
    "close_stop_on",
    "close_stop_off",
    "pump_flow_on",
    "pump_flow_off",
);

pub fn find(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}
