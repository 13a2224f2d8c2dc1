use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;
use crate::raster::{BinaryMask, ConfidenceMap};

/// `otsu` or `fixed:<t>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdMethod {
    Otsu,
    /// Values `>= t` become foreground.
    Fixed(f64),
}

impl Default for ThresholdMethod {
    fn default() -> Self {
        Self::Otsu
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Otsu => write!(f, "otsu"),
            Self::Fixed(t) => write!(f, "fixed:{t}"),
        }
    }
}

impl FromStr for ThresholdMethod {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "otsu" {
            return Ok(Self::Otsu);
        }
        let t = s
            .strip_prefix("fixed:")
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| CoreError::Argument(format!("unknown threshold method '{s}' (use otsu or fixed:<t>)")))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(CoreError::Argument(format!("fixed threshold {t} outside [0,1]")));
        }
        Ok(Self::Fixed(t))
    }
}

impl Serialize for ThresholdMethod {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ThresholdMethod {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Histogram bin of a confidence value.
#[inline]
pub fn bin_of(v: f32) -> usize {
    ((v as f64 * 255.0).round() as usize).min(255)
}

/// Otsu's threshold over a 256-bin histogram: the first bin `t` maximizing
/// between-class variance, with bins `> t` in the upper class. `None` when
/// fewer than two bins are populated.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<usize> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (t, &c) in hist.iter().enumerate().take(255) {
        w0 += c;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t);
        }
    }
    Some(best.1)
}

pub fn binarize(map: &ConfidenceMap, method: ThresholdMethod) -> BinaryMask {
    let (w, h) = (map.width(), map.height());
    let fixed = |t: f64| {
        let data = map.values().iter().map(|&v| (v as f64 >= t) as u8).collect();
        BinaryMask::from_vec(w, h, data).expect("consistent size")
    };
    match method {
        ThresholdMethod::Fixed(t) => fixed(t),
        ThresholdMethod::Otsu => {
            let mut hist = [0u64; 256];
            for &v in map.values() {
                hist[bin_of(v)] += 1;
            }
            match otsu_threshold(&hist) {
                Some(t) => {
                    let data = map.values().iter().map(|&v| (bin_of(v) > t) as u8).collect();
                    BinaryMask::from_vec(w, h, data).expect("consistent size")
                }
                None => {
                    log::warn!("confidence map is constant; thresholding at 0.5 instead of otsu");
                    fixed(0.5)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        assert_eq!("otsu".parse::<ThresholdMethod>().unwrap(), ThresholdMethod::Otsu);
        assert_eq!("fixed:0.25".parse::<ThresholdMethod>().unwrap(), ThresholdMethod::Fixed(0.25));
        assert!("fixed:2".parse::<ThresholdMethod>().is_err());
        assert!("mean".parse::<ThresholdMethod>().is_err());
        assert_eq!(ThresholdMethod::Fixed(0.5).to_string(), "fixed:0.5");
    }

    #[test]
    fn constant_map_falls_back_to_half() {
        let lo = ConfidenceMap::from_vec(2, 2, vec![0.3; 4]).unwrap();
        assert!(binarize(&lo, ThresholdMethod::Otsu).is_empty());
        let hi = ConfidenceMap::from_vec(2, 2, vec![0.7; 4]).unwrap();
        assert_eq!(binarize(&hi, ThresholdMethod::Otsu).count(), 4);
    }
}
