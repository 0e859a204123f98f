use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DailyOutcomePacket, ReflectionError};
use crate::agents::Role;
use crate::metrics;

pub const WEEK_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateThresholds {
    /// Weekly return lead over the baseline above which praise is given.
    #[serde(default)]
    pub praise_min_diff: f64,
    /// Weekly regret above which the corrective template is chosen.
    #[serde(default = "default_regret")]
    pub corrective_min_regret: f64,
}

fn default_regret() -> f64 {
    0.01
}

impl Default for TemplateThresholds {
    fn default() -> Self {
        Self {
            praise_min_diff: 0.0,
            corrective_min_regret: default_regret(),
        }
    }
}

/// Hardcoded guidance phrases, editable through a TOML file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePool {
    pub praise: String,
    pub neutral: String,
    pub corrective: Corrective,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corrective {
    pub quants: String,
    pub signals: String,
    pub decision: String,
}

impl Default for TemplatePool {
    fn default() -> Self {
        Self {
            praise: "Over the past week your signals consistently beat the baseline. Keep weighting the inputs \
                     that led to those calls."
                .into(),
            neutral: "Over the past week your results stayed close to the baseline. Going forward, prioritize \
                      high-confidence inputs and avoid acting on marginal evidence."
                .into(),
            corrective: Corrective {
                quants: "Over the past week you trailed the baseline. Step back and reconstruct your indicator \
                         selection, checking which readings actually led price."
                    .into(),
                signals: "Over the past week you trailed the baseline. Re-examine which news items and sentiment \
                          readings drove your calls and discount the ones that did not play out."
                    .into(),
                decision: "Over the past week you trailed the baseline. Improve allocation logic when the two \
                           analysts disagree and reduce over-hedging when they agree."
                    .into(),
            },
        }
    }
}

impl TemplatePool {
    pub fn load(path: &Path) -> Result<Self, ReflectionError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReflectionError::Templates {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| ReflectionError::Templates {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn corrective(&self, role: Role) -> &str {
        match role {
            Role::Quants => &self.corrective.quants,
            Role::Signals => &self.corrective.signals,
            _ => &self.corrective.decision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Praise,
    Corrective,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyStats {
    pub agent_return: f64,
    pub baseline_return: f64,
    /// `agent_return - baseline_return`.
    pub return_diff: f64,
    /// Undefined when the week's returns have no spread.
    pub sharpe: Option<f64>,
    pub regret: f64,
}

impl WeeklyStats {
    pub fn from_daily(agent: &[f64], baseline: &[f64]) -> Self {
        let agent_return = metrics::total_return(agent);
        let baseline_return = metrics::total_return(baseline);
        Self {
            agent_return,
            baseline_return,
            return_diff: agent_return - baseline_return,
            sharpe: metrics::sharpe(agent).ok(),
            regret: metrics::regret_from_totals(agent_return, baseline_return),
        }
    }
}

pub fn select_template(stats: &WeeklyStats, thresholds: &TemplateThresholds) -> TemplateKind {
    if stats.return_diff > thresholds.praise_min_diff {
        TemplateKind::Praise
    } else if stats.regret > thresholds.corrective_min_regret {
        TemplateKind::Corrective
    } else {
        TemplateKind::Neutral
    }
}

pub fn template_text(pool: &TemplatePool, kind: TemplateKind, role: Role) -> &str {
    match kind {
        TemplateKind::Praise => &pool.praise,
        TemplateKind::Neutral => &pool.neutral,
        TemplateKind::Corrective => pool.corrective(role),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyEntry {
    pub template: TemplateKind,
    pub text: String,
    pub stats: WeeklyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyFeedback {
    pub week_start: NaiveDate,
    pub week_end: NaiveDate,
    pub entries: BTreeMap<Role, WeeklyEntry>,
}

impl WeeklyFeedback {
    pub fn text(&self, role: Role) -> Option<&str> {
        self.entries.get(&role).map(|e| e.text.as_str())
    }
}

/// Summarises one completed seven-day block for every role listed in `roles`.
pub fn weekly_feedback(
    packets: &[DailyOutcomePacket],
    roles: &[Role],
    pool: &TemplatePool,
    thresholds: &TemplateThresholds,
) -> Result<WeeklyFeedback, ReflectionError> {
    if packets.len() != WEEK_DAYS {
        return Err(ReflectionError::IncompleteWeek { days: packets.len() });
    }
    if packets.windows(2).any(|w| (w[1].date - w[0].date).num_days() != 1) {
        return Err(ReflectionError::IncompleteWeek { days: packets.len() });
    }
    let baseline: Vec<f64> = packets.iter().map(|p| p.baseline_return).collect();
    let mut entries = BTreeMap::new();
    for role in roles {
        let daily = packets
            .iter()
            .map(|p| p.agent(*role).map(|a| a.portfolio_return))
            .collect::<Result<Vec<f64>, _>>()?;
        let stats = WeeklyStats::from_daily(&daily, &baseline);
        let template = select_template(&stats, thresholds);
        entries.insert(
            *role,
            WeeklyEntry {
                template,
                text: template_text(pool, template, *role).to_string(),
                stats,
            },
        );
    }
    Ok(WeeklyFeedback {
        week_start: packets[0].date,
        week_end: packets[WEEK_DAYS - 1].date,
        entries,
    })
}
