//! Built-in scenarios reproducing the figure settings.

use super::config::Scenario;
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 5] = ["fig3", "fig4", "fig5", "fig6", "fig7"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => include_str!("../../scenarios/fig3.toml"),
        "fig4" => include_str!("../../scenarios/fig4.toml"),
        "fig5" => include_str!("../../scenarios/fig5.toml"),
        "fig6" => include_str!("../../scenarios/fig6.toml"),
        "fig7" => include_str!("../../scenarios/fig7.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown preset '{name}' (expected one of {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    Scenario::from_toml(text)
}
