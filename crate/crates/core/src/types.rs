//! Shared domain enums.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidInput(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construct {
    Depression,
    Worry,
}

string_enum!(Construct { Depression => "depression", Worry => "worry" });

impl Construct {
    /// Clinical criteria for the construct, in reporting order.
    pub fn scales(self) -> [Scale; 2] {
        match self {
            Construct::Depression => [Scale::Cesd, Scale::Phq9],
            Construct::Worry => [Scale::Gad7, Scale::Pswq],
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Construct::Depression => "DEP",
            Construct::Worry => "WOR",
        }
    }
}

/// Elicitation structure of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    SelectWords,
    WriteWords,
    WritePhrases,
    WriteText,
}

string_enum!(ResponseFormat {
    SelectWords => "select_words",
    WriteWords => "write_words",
    WritePhrases => "write_phrases",
    WriteText => "write_text",
});

impl ResponseFormat {
    pub fn label(self) -> &'static str {
        match self {
            ResponseFormat::SelectWords => "Select words",
            ResponseFormat::WriteWords => "Write words",
            ResponseFormat::WritePhrases => "Write phrases",
            ResponseFormat::WriteText => "Write text",
        }
    }

    /// Formats whose units are scored individually and aggregated.
    pub fn is_aggregated(self) -> bool {
        matches!(self, ResponseFormat::WriteText)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Whole,
    UnitMean,
    UnitMaxabs,
}

string_enum!(Representation {
    Whole => "whole",
    UnitMean => "unit_mean",
    UnitMaxabs => "unit_maxabs",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scale {
    #[serde(rename = "PHQ9")]
    Phq9,
    #[serde(rename = "CESD")]
    Cesd,
    #[serde(rename = "GAD7")]
    Gad7,
    #[serde(rename = "PSWQ")]
    Pswq,
}

string_enum!(Scale { Phq9 => "PHQ9", Cesd => "CESD", Gad7 => "GAD7", Pswq => "PSWQ" });

impl Scale {
    /// Inclusive range of valid questionnaire totals.
    pub fn range(self) -> (u32, u32) {
        match self {
            Scale::Phq9 => (0, 27),
            Scale::Cesd => (0, 60),
            Scale::Gad7 => (0, 21),
            Scale::Pswq => (16, 80),
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Scale::Phq9 => "phq9",
            Scale::Cesd => "cesd",
            Scale::Gad7 => "gad7",
            Scale::Pswq => "pswq",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scale::Phq9 => "PHQtot",
            Scale::Cesd => "CESDtot",
            Scale::Gad7 => "GADtot",
            Scale::Pswq => "PSWQtot",
        }
    }
}

/// Which time points enter an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimePointFilter {
    T1,
    T2,
    #[default]
    Pooled,
}

string_enum!(TimePointFilter { T1 => "t1", T2 => "t2", Pooled => "pooled" });

impl TimePointFilter {
    pub fn admits(self, time_point: u8) -> bool {
        match self {
            TimePointFilter::T1 => time_point == 1,
            TimePointFilter::T2 => time_point == 2,
            TimePointFilter::Pooled => true,
        }
    }
}

/// A row of the report tables: a response format, with free text split by
/// representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportRow {
    SelectWords,
    WritePhrases,
    WriteWords,
    WriteText,
    WriteTextMaxabs,
    WriteTextMean,
}

string_enum!(ReportRow {
    SelectWords => "select_words",
    WritePhrases => "write_phrases",
    WriteWords => "write_words",
    WriteText => "write_text",
    WriteTextMaxabs => "write_text_maxabs",
    WriteTextMean => "write_text_mean",
});

impl ReportRow {
    pub fn of(format: ResponseFormat, representation: Representation) -> Option<ReportRow> {
        use Representation::*;
        use ResponseFormat::*;
        match (format, representation) {
            (SelectWords, Whole) => Some(ReportRow::SelectWords),
            (WritePhrases, Whole) => Some(ReportRow::WritePhrases),
            (WriteWords, Whole) => Some(ReportRow::WriteWords),
            (WriteText, Whole) => Some(ReportRow::WriteText),
            (WriteText, UnitMaxabs) => Some(ReportRow::WriteTextMaxabs),
            (WriteText, UnitMean) => Some(ReportRow::WriteTextMean),
            _ => None,
        }
    }

    pub fn format(self) -> ResponseFormat {
        match self {
            ReportRow::SelectWords => ResponseFormat::SelectWords,
            ReportRow::WritePhrases => ResponseFormat::WritePhrases,
            ReportRow::WriteWords => ResponseFormat::WriteWords,
            ReportRow::WriteText | ReportRow::WriteTextMaxabs | ReportRow::WriteTextMean => ResponseFormat::WriteText,
        }
    }

    pub fn representation(self) -> Representation {
        match self {
            ReportRow::WriteTextMaxabs => Representation::UnitMaxabs,
            ReportRow::WriteTextMean => Representation::UnitMean,
            _ => Representation::Whole,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReportRow::WriteTextMaxabs => "Write text (Max Abs)",
            ReportRow::WriteTextMean => "Write text (Mean)",
            other => other.format().label(),
        }
    }
}
