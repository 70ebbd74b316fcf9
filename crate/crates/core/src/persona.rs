//! The eight-attribute persona schema.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of attributes in one persona profile.
pub const ATTRIBUTE_COUNT: usize = 8;

/// One persona attribute, in canonical field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Name,
    Gender,
    Ethnicity,
    SexualOrientation,
    SocialClass,
    EducationLevel,
    Occupation,
    TopPersonalInterest,
}

impl Attribute {
    pub const ALL: [Attribute; ATTRIBUTE_COUNT] = [
        Attribute::Name,
        Attribute::Gender,
        Attribute::Ethnicity,
        Attribute::SexualOrientation,
        Attribute::SocialClass,
        Attribute::EducationLevel,
        Attribute::Occupation,
        Attribute::TopPersonalInterest,
    ];

    /// Identity axes, the row side of a bias dimension.
    pub const IDENTITY: [Attribute; 4] = [
        Attribute::Name,
        Attribute::Gender,
        Attribute::Ethnicity,
        Attribute::SexualOrientation,
    ];

    /// Social dimensions, the column side of a bias dimension.
    pub const SOCIAL: [Attribute; 4] = [
        Attribute::SocialClass,
        Attribute::EducationLevel,
        Attribute::Occupation,
        Attribute::TopPersonalInterest,
    ];

    /// Attributes that a taxonomy may map (everything except `name`).
    pub const MAPPABLE: [Attribute; 7] = [
        Attribute::Gender,
        Attribute::Ethnicity,
        Attribute::SexualOrientation,
        Attribute::SocialClass,
        Attribute::EducationLevel,
        Attribute::Occupation,
        Attribute::TopPersonalInterest,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Attribute::Name => "name",
            Attribute::Gender => "gender",
            Attribute::Ethnicity => "ethnicity",
            Attribute::SexualOrientation => "sexual_orientation",
            Attribute::SocialClass => "social_class",
            Attribute::EducationLevel => "education_level",
            Attribute::Occupation => "occupation",
            Attribute::TopPersonalInterest => "top_personal_interest",
        }
    }

    /// Short label used in human-readable tables.
    pub fn label(self) -> &'static str {
        match self {
            Attribute::Name => "Name",
            Attribute::Gender => "Gender",
            Attribute::Ethnicity => "Ethnicity",
            Attribute::SexualOrientation => "Sexual Orientation",
            Attribute::SocialClass => "Social Class",
            Attribute::EducationLevel => "Education",
            Attribute::Occupation => "Occupation",
            Attribute::TopPersonalInterest => "Interest",
        }
    }

    pub fn is_identity(self) -> bool {
        Self::IDENTITY.contains(&self)
    }

    pub fn is_social(self) -> bool {
        Self::SOCIAL.contains(&self)
    }

    /// Matches a loosely written field name: case-insensitive, with spaces,
    /// hyphens and underscores treated alike.
    pub fn from_loose_key(key: &str) -> Option<Attribute> {
        let folded: String = key
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        Self::ALL.into_iter().find(|a| a.key() == folded)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::from_loose_key(s).ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// Where a persona came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Source {
    pub model_id: String,
    pub run_id: String,
    /// Position of the profile inside its payload (or line in a corpus file).
    pub index: usize,
}

/// One generated persona.
///
/// Raw values are stored after [`crate::text::normalize_text`], so equality on
/// `raw` is the duplicate relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaRecord {
    pub raw: [String; ATTRIBUTE_COUNT],
    /// Canonical category per attribute, filled by the taxonomy.
    pub canonical: Option<[String; ATTRIBUTE_COUNT]>,
    pub source: Source,
}

impl PersonaRecord {
    pub fn new(raw: [String; ATTRIBUTE_COUNT], source: Source) -> Self {
        PersonaRecord {
            raw,
            canonical: None,
            source,
        }
    }

    pub fn raw(&self, attribute: Attribute) -> &str {
        &self.raw[attribute.index()]
    }

    /// Canonical category, falling back to the raw value before
    /// canonicalization.
    pub fn category(&self, attribute: Attribute) -> &str {
        match &self.canonical {
            Some(c) => &c[attribute.index()],
            None => &self.raw[attribute.index()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loose_keys() {
        assert_eq!(
            Attribute::from_loose_key("Sexual Orientation"),
            Some(Attribute::SexualOrientation)
        );
        assert_eq!(
            Attribute::from_loose_key("TOP_personal interest"),
            Some(Attribute::TopPersonalInterest)
        );
        assert_eq!(Attribute::from_loose_key("age"), None);
    }

    #[test]
    fn canonical_order_matches_index() {
        for (i, a) in Attribute::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
        }
    }
}
