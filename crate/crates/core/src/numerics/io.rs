//! JSON form `{"rows", "cols", "entries": [[re, im], ...]}` for matrices.

use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::numerics::matrix::{ComplexMatrix, C64};

/// Float rendered with 17 significant digits.
pub fn float17(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{x:.16e}")).expect("scientific notation is valid JSON")
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<[Box<RawValue>; 2]> = self
            .entries()
            .iter()
            .map(|z| [float17(z.re), float17(z.im)])
            .collect();
        let mut st = s.serialize_struct("ComplexMatrix", 3)?;
        st.serialize_field("rows", &self.rows())?;
        st.serialize_field("cols", &self.cols())?;
        st.serialize_field("entries", &entries)?;
        st.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        let data = repr.entries.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::new(repr.rows, repr.cols, data).map_err(D::Error::custom)
    }
}

/// Serializes a complex number as `[re, im]` with 17 significant digits.
pub fn complex_pair(z: C64) -> [Box<RawValue>; 2] {
    [float17(z.re), float17(z.im)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::random::ginibre;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ginibre(3, 4, &mut rng);
        let text = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn writer_uses_seventeen_digits() {
        let m = ComplexMatrix::identity(1);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(
            text,
            r#"{"rows":1,"cols":1,"entries":[[1.0000000000000000e0,0.0000000000000000e0]]}"#
        );
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = r#"{"rows":2,"cols":2,"entries":[[1,0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(bad).is_err());
        let empty = r#"{"rows":0,"cols":0,"entries":[]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(empty).is_err());
    }
}
