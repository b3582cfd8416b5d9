//! Config parsing: TOML round-trips, defaults, and validation rejections.

use kelly_sim::config::{
    Algorithm, ExperimentConfig, NoiseSpec, RateNormalization, ScheduleSpec,
};
use kelly_sim::experiment::agent_labels;

const FULL: &str = r#"
output = "results/run1"

[game]
n = 10
a_base = 100.0
gamma = 5.0
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 3000
runs = 10
seed = 42
threshold = 1e-5
rate_normalization = "certified"

[[population]]
algorithm = "br"
count = 3

[[population]]
algorithm = "ogd"
count = 3
schedule = { kind = "power", beta = 0.6, scale = 40.0 }

[[population]]
algorithm = "daq"
count = 2
schedule = { kind = "gap-guarantee" }

[[population]]
algorithm = "rmq"
count = 2
lambda = 2.0
schedule = { kind = "adaptive" }
"#;

#[test]
fn full_config_round_trips_through_toml() {
    let parsed = ExperimentConfig::from_toml(FULL).expect("valid config");
    assert_eq!(parsed.game.n, 10);
    assert_eq!(parsed.game.gamma, 5.0);
    assert_eq!(parsed.run.rate_normalization, RateNormalization::Certified);
    assert_eq!(parsed.population.len(), 4);
    assert_eq!(parsed.population[1].algorithm, Algorithm::Ogd);
    assert_eq!(
        parsed.population[1].schedule,
        Some(ScheduleSpec::Power {
            beta: 0.6,
            scale: 40.0
        })
    );
    assert_eq!(parsed.population[3].lambda, 2.0);

    let serialized = toml::to_string(&parsed).expect("serializes back to TOML");
    let reparsed = ExperimentConfig::from_toml(&serialized).expect("round-trip parses");
    assert_eq!(parsed, reparsed);
}

#[test]
fn slicing_config_round_trips_through_toml() {
    let text = r#"
[game]
n = 3
delta = 0.1
epsilon = 1.0
budget = 400.0

[slicing]
tenants = [120, 80, 40]
bandwidth = 10.0
noise = { kind = "gaussian", mean = 0.0, std = 2.0 }

[run]
horizon = 500
runs = 2
seed = 7

[[population]]
algorithm = "br"
count = 3
"#;
    let parsed = ExperimentConfig::from_toml(text).expect("valid config");
    let slicing = parsed.slicing.as_ref().expect("slicing section present");
    assert_eq!(slicing.tenants, vec![120, 80, 40]);
    assert_eq!(
        slicing.noise,
        NoiseSpec::Gaussian {
            mean: 0.0,
            std: 2.0
        }
    );

    let serialized = toml::to_string(&parsed).expect("serializes back to TOML");
    let reparsed = ExperimentConfig::from_toml(&serialized).expect("round-trip parses");
    assert_eq!(parsed, reparsed);
}

#[test]
fn omitted_fields_take_documented_defaults() {
    let text = r#"
[game]
n = 2
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 100
runs = 1
seed = 0

[[population]]
algorithm = "br"
count = 2
"#;
    let parsed = ExperimentConfig::from_toml(text).expect("valid config");
    assert_eq!(parsed.game.a_base, None);
    assert_eq!(parsed.game.a_base_or_default(), 100.0);
    assert_eq!(parsed.game.gamma, 0.0);
    assert_eq!(parsed.run.threshold, 1e-5);
    assert_eq!(parsed.run.rate_normalization, RateNormalization::Calibrated);
    assert_eq!(parsed.population[0].lambda, 1.0);
    assert_eq!(parsed.output, None);
}

#[test]
fn noise_defaults_to_none_when_key_is_omitted() {
    let text = r#"
[game]
n = 2
delta = 0.1
epsilon = 1.0
budget = 400.0

[slicing]
tenants = [50, 50]
bandwidth = 1.0

[run]
horizon = 10
runs = 1
seed = 0

[[population]]
algorithm = "br"
count = 2
"#;
    let parsed = ExperimentConfig::from_toml(text).expect("valid config");
    assert_eq!(parsed.slicing.unwrap().noise, NoiseSpec::None);
}

#[test]
fn fractions_resolve_by_rounding_against_n() {
    let text = r#"
[game]
n = 10
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 10
runs = 1
seed = 0

[[population]]
algorithm = "br"
fraction = 0.3

[[population]]
algorithm = "ogd"
fraction = 0.7
schedule = { kind = "adaptive" }
"#;
    let parsed = ExperimentConfig::from_toml(text).expect("valid config");
    assert_eq!(parsed.resolved_counts().unwrap(), vec![3, 7]);
    let labels = agent_labels(&parsed).unwrap();
    assert_eq!(labels[0], "br");
    assert_eq!(labels[2], "br");
    assert_eq!(labels[3], "ogd[adaptive]");
    assert_eq!(labels[9], "ogd[adaptive]");
}

fn expect_rejection(text: &str, needle: &str) {
    let err = ExperimentConfig::from_toml(text).expect_err("config should be rejected");
    let message = format!("{err:#}");
    assert!(
        message.contains(needle),
        "error {message:?} should mention {needle:?}"
    );
}

const VALID_PREFIX: &str = r#"
[game]
n = 4
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 10
runs = 1
seed = 0
"#;

#[test]
fn mismatched_population_totals_are_rejected() {
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
count = 3
"
        ),
        "cover 3 agents",
    );
    // Rounded fractions that overshoot n are an error, not silently
    // truncated: round(0.375*4) + round(0.625*4) = 2 + 3.
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
fraction = 0.375

[[population]]
algorithm = \"br\"
fraction = 0.625
"
        ),
        "cover 5 agents",
    );
}

#[test]
fn population_entry_errors_are_rejected() {
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
count = 2
fraction = 0.5

[[population]]
algorithm = \"br\"
count = 2
"
        ),
        "not both",
    );
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
"
        ),
        "count or fraction",
    );
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"daq\"
count = 4
"
        ),
        "requires a schedule",
    );
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
count = 4
schedule = {{ kind = \"adaptive\" }}
"
        ),
        "no schedule",
    );
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"ogd\"
count = 4
lambda = 2.0
schedule = {{ kind = \"adaptive\" }}
"
        ),
        "lambda applies to rmq only",
    );
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"ogd\"
count = 4
schedule = {{ kind = \"power\", beta = 0.4, scale = 1.0 }}
"
        ),
        "beta",
    );
}

#[test]
fn unknown_keys_are_rejected() {
    expect_rejection(
        &format!(
            "{VALID_PREFIX}
[[population]]
algorithm = \"br\"
count = 4
horizont = 3
"
        ),
        "horizont",
    );
}

#[test]
fn slicing_inconsistencies_are_rejected() {
    let base = r#"
[run]
horizon = 10
runs = 1
seed = 0

[[population]]
algorithm = "br"
count = 2
"#;
    expect_rejection(
        &format!(
            r#"
[game]
n = 2
delta = 0.1
epsilon = 1.0
budget = 400.0

[slicing]
tenants = [10, 20, 30]
bandwidth = 1.0
{base}"#
        ),
        "3 entries but game.n = 2",
    );
    expect_rejection(
        &format!(
            r#"
[game]
n = 2
a_base = 50.0
delta = 0.1
epsilon = 1.0
budget = 400.0

[slicing]
tenants = [10, 20]
bandwidth = 1.0
{base}"#
        ),
        "remove game.a_base",
    );
    expect_rejection(
        &format!(
            r#"
[game]
n = 2
delta = 0.1
epsilon = 1.0
budget = 400.0

[slicing]
tenants = [10, 0]
bandwidth = 1.0
{base}"#
        ),
        "at least one subscriber",
    );
}

#[test]
fn game_section_errors_are_rejected() {
    expect_rejection(
        r#"
[game]
n = 0
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 10
runs = 1
seed = 0

[[population]]
algorithm = "br"
count = 0
"#,
        "game.n",
    );
    expect_rejection(
        r#"
[game]
n = 1
delta = 0.1
epsilon = 2.0
budget = 1.0

[run]
horizon = 10
runs = 1
seed = 0

[[population]]
algorithm = "br"
count = 1
"#,
        "budget",
    );
    expect_rejection(
        r#"
[game]
n = 1
delta = 0.1
epsilon = 1.0
budget = 400.0

[run]
horizon = 10
runs = 1
seed = 0
threshold = 0.0

[[population]]
algorithm = "br"
count = 1
"#,
        "threshold",
    );
}
