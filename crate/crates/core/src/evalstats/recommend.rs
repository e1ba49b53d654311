//! Few-shot method selection by device feature count, task and upgrade
//! size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLevel {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Train,
    DeviceAdapt,
    VersionAdapt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Upgrade {
    Minor,
    Major,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shots(pub u8);

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-shot", self.0)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RecommendError {
    #[error("an upgrade kind applies only to version adaptation")]
    UnexpectedUpgrade,
    #[error("version adaptation needs an upgrade kind (minor or major)")]
    MissingUpgrade,
    #[error("unknown value `{0}`")]
    Parse(String),
}

pub fn recommend_shot_method(
    features: FeatureLevel,
    task: TaskKind,
    time_constrained: bool,
    upgrade: Option<Upgrade>,
) -> Result<Shots, RecommendError> {
    use FeatureLevel::*;
    let high = features == High;
    match (task, upgrade) {
        (TaskKind::VersionAdapt, None) => Err(RecommendError::MissingUpgrade),
        (TaskKind::Train | TaskKind::DeviceAdapt, Some(_)) => Err(RecommendError::UnexpectedUpgrade),
        (TaskKind::Train, None) => Ok(match (time_constrained, high) {
            (true, false) => Shots(1),
            (true, true) | (false, false) => Shots(2),
            (false, true) => Shots(5),
        }),
        (TaskKind::DeviceAdapt, None) => Ok(match features {
            Low => Shots(1),
            Medium => Shots(2),
            High => Shots(5),
        }),
        (TaskKind::VersionAdapt, Some(Upgrade::Minor)) => Ok(Shots(1)),
        (TaskKind::VersionAdapt, Some(Upgrade::Major)) => Ok(if high { Shots(5) } else { Shots(2) }),
    }
}

macro_rules! parse_enum {
    ($t:ty { $($s:literal => $v:expr),* $(,)? }) => {
        impl FromStr for $t {
            type Err = RecommendError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($v),)*
                    other => Err(RecommendError::Parse(other.to_string())),
                }
            }
        }
    };
}

parse_enum!(FeatureLevel { "low" => FeatureLevel::Low, "medium" => FeatureLevel::Medium, "high" => FeatureLevel::High });
parse_enum!(TaskKind { "train" => TaskKind::Train, "device-adapt" => TaskKind::DeviceAdapt, "version-adapt" => TaskKind::VersionAdapt });
parse_enum!(Upgrade { "minor" => Upgrade::Minor, "major" => Upgrade::Major });

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        use FeatureLevel::*;
        let r = |f, t, c, u| recommend_shot_method(f, t, c, u).unwrap().0;
        assert_eq!(r(Low, TaskKind::Train, true, None), 1);
        assert_eq!(r(Medium, TaskKind::Train, true, None), 1);
        assert_eq!(r(High, TaskKind::Train, true, None), 2);
        assert_eq!(r(Low, TaskKind::Train, false, None), 2);
        assert_eq!(r(High, TaskKind::Train, false, None), 5);
        assert_eq!(r(Low, TaskKind::DeviceAdapt, false, None), 1);
        assert_eq!(r(Medium, TaskKind::DeviceAdapt, true, None), 2);
        assert_eq!(r(High, TaskKind::DeviceAdapt, false, None), 5);
        for f in [Low, Medium, High] {
            assert_eq!(r(f, TaskKind::VersionAdapt, false, Some(Upgrade::Minor)), 1);
        }
        assert_eq!(r(Medium, TaskKind::VersionAdapt, false, Some(Upgrade::Major)), 2);
        assert_eq!(r(High, TaskKind::VersionAdapt, false, Some(Upgrade::Major)), 5);
    }

    #[test]
    fn inconsistent_arguments() {
        assert_eq!(
            recommend_shot_method(FeatureLevel::Low, TaskKind::Train, false, Some(Upgrade::Major)),
            Err(RecommendError::UnexpectedUpgrade)
        );
        assert_eq!(
            recommend_shot_method(FeatureLevel::Low, TaskKind::VersionAdapt, false, None),
            Err(RecommendError::MissingUpgrade)
        );
        assert_eq!(Shots(5).to_string(), "5-shot");
    }
}
