//! Compliance policy: tax rates as exact rationals, KYC gates, daily caps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fixtures::DEFAULT_DENOMINATIONS;

/// A rate `num / den` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0 && num <= den).then_some(Self { num, den })
    }

    /// `floor(amount * num / den)`, exact.
    pub fn floor_of(&self, amount: u64) -> u64 {
        (u128::from(amount) * u128::from(self.num) / u128::from(self.den)) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPolicy {
    pub tax_rate: Rate,
    pub kyc_required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompliancePolicy {
    pub version: u32,
    pub categories: BTreeMap<String, CategoryPolicy>,
    pub max_redemption_per_vendor_per_day: u64,
    pub onward_transfer_default: bool,
    pub denominations: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("tax rate for {0} is not in [0, 1]")]
    BadRate(String),
    #[error("denomination schedule must be non-empty, positive and distinct")]
    BadDenominations,
}

impl CompliancePolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        for (name, c) in &self.categories {
            if Rate::new(c.tax_rate.num, c.tax_rate.den).is_none() {
                return Err(PolicyError::BadRate(name.clone()));
            }
        }
        let mut d = self.denominations.clone();
        d.sort_unstable();
        d.dedup();
        if d.is_empty() || d[0] == 0 || d.len() != self.denominations.len() {
            return Err(PolicyError::BadDenominations);
        }
        Ok(())
    }

    pub fn category(&self, name: &str) -> Option<&CategoryPolicy> {
        self.categories.get(name)
    }

    /// Tax withheld on `gross` for `category`: floor(gross * rate).
    pub fn withholding(&self, category: &str, gross: u64) -> Option<u64> {
        self.category(category).map(|c| c.tax_rate.floor_of(gross))
    }

    /// Policy used by the CLI demo and the tests.
    pub fn demo() -> Self {
        let mut categories = BTreeMap::new();
        let mut add = |name: &str, num, den, kyc| {
            categories.insert(name.to_string(), CategoryPolicy { tax_rate: Rate { num, den }, kyc_required: kyc });
        };
        add("essential-goods", 20, 100, false);
        add("food", 20, 100, false);
        add("services", 1, 3, false);
        add("wholesale", 10, 100, true);
        Self {
            version: 1,
            categories,
            max_redemption_per_vendor_per_day: 1_000_000,
            onward_transfer_default: false,
            denominations: DEFAULT_DENOMINATIONS.to_vec(),
        }
    }
}
