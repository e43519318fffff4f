use std::collections::{BTreeMap, BTreeSet};

/// Code assigned to pixels/plots with no parcel code.
pub const DEFAULT_CODE: u32 = 1000;
/// Code that all special NYC parcel codes are folded into.
pub const NYC_CODE: u32 = 2000;
pub const MIN_CODE_SHARE: f64 = 0.01;
pub const MIN_CATEGORY_SHARE: f64 = 0.05;

/// Map a raw parcel code to the encoded code space. Standard property-class
/// codes are 100..=999; missing values map to 1000; anything else is treated
/// as a special NYC code and maps to 2000.
pub fn normalize_tax_code(raw: Option<f64>) -> u32 {
    match raw {
        None => DEFAULT_CODE,
        Some(v) if !v.is_finite() || v < 100.0 => DEFAULT_CODE,
        Some(v) if v < 1000.0 => v as u32,
        Some(v) if v == DEFAULT_CODE as f64 => DEFAULT_CODE,
        Some(_) => NYC_CODE,
    }
}

/// Hundreds-group category for standard codes; the special codes are their
/// own category.
pub fn category_of(code: u32) -> u32 {
    if (100..1000).contains(&code) {
        code / 100 * 100
    } else {
        code
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxEncoding {
    pub retained_codes: BTreeSet<u32>,
    pub retained_categories: BTreeSet<u32>,
    pub code_to_category: BTreeMap<u32, u32>,
}

impl TaxEncoding {
    /// Indicator names, codes first then categories, each ascending.
    pub fn indicator_names(&self) -> Vec<String> {
        self.retained_codes
            .iter()
            .map(|c| format!("TAX_CODE_{c}"))
            .chain(self.retained_categories.iter().map(|c| format!("TAX_CATEGORY_{c}")))
            .collect()
    }

    pub fn n_indicators(&self) -> usize {
        self.retained_codes.len() + self.retained_categories.len()
    }

    /// Indicator values (0/1) aligned with [`Self::indicator_names`].
    pub fn encode(&self, code: u32) -> Vec<f64> {
        let cat = category_of(code);
        self.retained_codes
            .iter()
            .map(|c| f64::from(u8::from(*c == code)))
            .chain(self.retained_categories.iter().map(|c| f64::from(u8::from(*c == cat))))
            .collect()
    }
}

/// Fit the retained code/category sets on training-plot codes (already
/// normalized with [`normalize_tax_code`]).
pub fn fit_tax_encoding(codes: &[u32]) -> crate::Result<TaxEncoding> {
    fit_tax_encoding_with(codes, MIN_CODE_SHARE, MIN_CATEGORY_SHARE)
}

pub fn fit_tax_encoding_with(codes: &[u32], min_code: f64, min_category: f64) -> crate::Result<TaxEncoding> {
    if codes.is_empty() {
        return Err(crate::Error::invalid("tax encoding needs at least one training code"));
    }
    let n = codes.len() as f64;
    let mut code_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut cat_counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in codes {
        *code_counts.entry(c).or_default() += 1;
        *cat_counts.entry(category_of(c)).or_default() += 1;
    }
    Ok(TaxEncoding {
        retained_codes: code_counts
            .iter()
            .filter(|(_, &k)| k as f64 / n >= min_code)
            .map(|(&c, _)| c)
            .collect(),
        retained_categories: cat_counts
            .iter()
            .filter(|(_, &k)| k as f64 / n >= min_category)
            .map(|(&c, _)| c)
            .collect(),
        code_to_category: code_counts.keys().map(|&c| (c, category_of(c))).collect(),
    })
}

/// Indicator set for one raw code.
pub fn encode_tax(raw: Option<f64>, enc: &TaxEncoding) -> Vec<f64> {
    enc.encode(normalize_tax_code(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_code() {
        let enc = fit_tax_encoding(&[910; 20]).unwrap();
        assert_eq!(enc.retained_codes, BTreeSet::from([910]));
        assert_eq!(enc.indicator_names(), vec!["TAX_CODE_910", "TAX_CATEGORY_900"]);
        assert_eq!(encode_tax(Some(910.0), &enc), vec![1.0, 1.0]);
    }

    #[test]
    fn rare_code_dropped() {
        let mut codes = vec![910; 199];
        codes.push(105);
        let enc = fit_tax_encoding(&codes).unwrap();
        assert!(!enc.retained_codes.contains(&105));
        assert!(!enc.retained_categories.contains(&100));
        assert_eq!(encode_tax(Some(105.0), &enc), vec![0.0, 0.0]);
    }

    #[test]
    fn missing_and_nyc() {
        assert_eq!(normalize_tax_code(None), 1000);
        assert_eq!(normalize_tax_code(Some(1000.0)), 1000);
        assert_eq!(normalize_tax_code(Some(1234.0)), 2000);
        let enc = fit_tax_encoding(&[1000, 1000, 910, 910]).unwrap();
        assert_eq!(enc.indicator_names(), vec!["TAX_CODE_910", "TAX_CODE_1000", "TAX_CATEGORY_900", "TAX_CATEGORY_1000"]);
        assert_eq!(encode_tax(None, &enc), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn at_most_one_code_and_category() {
        let codes: Vec<u32> = [105, 112, 210, 240, 910, 911, 1000].iter().cycle().take(70).copied().collect();
        let enc = fit_tax_encoding(&codes).unwrap();
        for raw in [105.0, 240.0, 911.0, 500.0] {
            let v = enc.encode(normalize_tax_code(Some(raw)));
            let (codes_part, cats) = v.split_at(enc.retained_codes.len());
            assert!(codes_part.iter().sum::<f64>() <= 1.0);
            assert!(cats.iter().sum::<f64>() <= 1.0);
        }
    }
}
