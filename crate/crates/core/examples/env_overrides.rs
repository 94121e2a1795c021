//! Plans are JSON with defaults for every key; `SKOTT_*` variables override them.

use skott::harness::ExperimentPlan;

fn main() -> skott::Result<()> {
    let mut plan: ExperimentPlan =
        serde_json::from_str(r#"{ "config": { "media_objects": 5 }, "slot": 3 }"#)?;
    plan.apply_env_overrides([
        ("SKOTT_TOTAL_BUDGET".to_string(), "12000".to_string()),
        (
            "SKOTT_SIMULATOR__CTR_INTERVAL".to_string(),
            "[0.001, 0.004]".to_string(),
        ),
        (
            "SKOTT_ALGORITHMS".to_string(),
            r#"["vnl", "skt1+skt2"]"#.to_string(),
        ),
    ])?;
    plan.validate()?;
    println!("{}", serde_json::to_string_pretty(&plan)?);
    Ok(())
}
