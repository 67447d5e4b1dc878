//! Advertiser host categories and their problem tiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::UnknownCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    MostProblematic,
    QuiteProblematic,
    PotentiallyProblematic,
    Neutral,
    NotToDetermine,
    PossiblyDrugs,
}

impl Tier {
    pub const ALL: [Tier; 6] = [
        Tier::MostProblematic,
        Tier::QuiteProblematic,
        Tier::PotentiallyProblematic,
        Tier::Neutral,
        Tier::NotToDetermine,
        Tier::PossiblyDrugs,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Tier::MostProblematic => "Most Problematic",
            Tier::QuiteProblematic => "Quite Problematic",
            Tier::PotentiallyProblematic => "Potentially Problematic",
            Tier::Neutral => "Neutral",
            Tier::NotToDetermine => "Not to determine",
            Tier::PossiblyDrugs => "Possibly drugs",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

macro_rules! categories {
    ($($variant:ident => $label:literal, $tier:ident;)*) => {
        /// Label assigned to an advertiser host by qualitative review.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(into = "&'static str", try_from = "String")]
        pub enum HostCategory {
            $($variant,)*
        }

        impl HostCategory {
            pub const ALL: &'static [HostCategory] = &[$(HostCategory::$variant,)*];

            pub fn label(self) -> &'static str {
                match self {
                    $(HostCategory::$variant => $label,)*
                }
            }

            pub fn tier(self) -> Tier {
                match self {
                    $(HostCategory::$variant => Tier::$tier,)*
                }
            }
        }

        impl FromStr for HostCategory {
            type Err = UnknownCode;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.trim().to_lowercase();
                match wanted.as_str() {
                    $($label => Ok(HostCategory::$variant),)*
                    _ => Err(UnknownCode(s.to_string())),
                }
            }
        }
    };
}

categories! {
    CommercialClinic => "commercial clinic", MostProblematic;
    ClinicalTrialsPrivate => "clinical trials - private", QuiteProblematic;
    ClinicalTrialsCommercial => "clinical trials - commercial", QuiteProblematic;
    ComplementaryTreatmentCommercial => "complementary treatment - commercial", QuiteProblematic;
    BloodBankingCommercial => "blood banking - commercial", QuiteProblematic;
    HealthNewsCommercial => "health news - commercial", QuiteProblematic;
    PoliticalLobbyOrganization => "political lobby organization", PotentiallyProblematic;
    PharmaceuticalCompany => "pharmaceutical company", PotentiallyProblematic;
    CommercialNonHealthSpecific => "commercial non-health specific", PotentiallyProblematic;
    ConferenceCommercial => "conference - commercial", PotentiallyProblematic;
    BiopharmaSupplies => "biopharma supplies", PotentiallyProblematic;
    HealthNewsPublic => "health news - public", Neutral;
    ResearchInstitute => "research institute", Neutral;
    BloodBankingPublic => "blood banking - public", Neutral;
    ClinicalTrialsPublic => "clinical trials - public", Neutral;
    ConferencePublic => "conference - public", Neutral;
    Governmental => "governmental", Neutral;
    HealthcareProviderInstitution => "healthcare provider - institution", Neutral;
    NonProfitHealthOrganization => "non-profit health organization", Neutral;
    PatientGroups => "patient groups", Neutral;
    Social => "social", Neutral;
    Crowdfunding => "crowdfunding", Neutral;
    Other => "other", Neutral;
    News => "news", Neutral;
    Unknown => "unknown", NotToDetermine;
    NeedsReview => "needs review", PossiblyDrugs;
}

impl fmt::Display for HostCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<HostCategory> for &'static str {
    fn from(c: HostCategory) -> &'static str {
        c.label()
    }
}

impl TryFrom<String> for HostCategory {
    type Error = UnknownCode;

    fn try_from(s: String) -> Result<Self, UnknownCode> {
        s.parse()
    }
}

/// Taxonomy row for one canonical advertiser host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostLabelEntry {
    pub host: String,
    pub category: HostCategory,
    pub critical: bool,
}

impl HostLabelEntry {
    pub fn tier(&self) -> Tier {
        self.category.tier()
    }
}
