use crate::classifier::PolarityDistribution;
use crate::text::{Special, PREFIX_BUCKETS};

/// Round-half-up of `p·10` into `0..=10`.
pub fn bucket(p: f64) -> u8 {
    // The 1e-9 slack keeps decimal halves like 0.15 on the upper side.
    let b = (p * 10.0 + 0.5 + 1e-9).floor();
    b.clamp(0.0, (PREFIX_BUCKETS - 1) as f64) as u8
}

/// Two quantized tokens carrying `p(pos|u₁)` and `p(neg|u₁)`.
pub fn encode_emotion_prefix(polarity: &PolarityDistribution) -> [Special; 2] {
    [Special::Pos(bucket(polarity.p_pos)), Special::Neg(bucket(polarity.p_neg))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pol(p_pos: f64, p_neg: f64) -> PolarityDistribution {
        PolarityDistribution::new(p_pos, p_neg, 1.0 - p_pos - p_neg).unwrap()
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(encode_emotion_prefix(&pol(0.93, 0.02)), [Special::Pos(9), Special::Neg(0)]);
        assert_eq!(encode_emotion_prefix(&pol(1.0, 0.0)), [Special::Pos(10), Special::Neg(0)]);
        assert_eq!(encode_emotion_prefix(&pol(0.5, 0.25)), [Special::Pos(5), Special::Neg(3)]);
        assert_eq!(bucket(0.15), 2);
        assert_eq!(bucket(0.049), 0);
        assert_eq!(bucket(0.05), 1);
        assert_eq!(bucket(0.0), 0);
    }

    #[test]
    fn symbols_are_readable() {
        let [p, n] = encode_emotion_prefix(&pol(0.93, 0.02));
        assert_eq!(p.symbol(), "<POS_9>");
        assert_eq!(n.symbol(), "<NEG_0>");
    }
}
