//! CSI data model and the `CSI1` binary container.
//!
//! Layout (little-endian): magic `CSI1`, then `u16` fields `n_t, n_r, n_p,
//! n_s`, then `n_t·n_r·n_p·n_s` interleaved `(re, im)` signed bytes ordered
//! pair-major, packet next, subcarrier innermost. Pair index is
//! transmitter-major: `pair = i·n_r + j`.

mod manifest;
mod synth;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use synth::{generate_synthetic, write_synthetic, ClassSignature, SyntheticDataset, SyntheticSpec};

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CSI_MAGIC: [u8; 4] = *b"CSI1";
pub const HEADER_LEN: usize = 12;

/// Packet count the preprocessing chain standardises on.
pub const DEFAULT_TARGET_PACKETS: usize = 1500;

/// One raw channel measurement in ADC units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ComplexSample {
    pub re: i8,
    pub im: i8,
}

impl ComplexSample {
    pub fn new(re: i8, im: i8) -> Self {
        ComplexSample { re, im }
    }

    pub fn amplitude(self) -> f64 {
        f64::from(self.re).hypot(f64::from(self.im))
    }
}

/// Number of interaction classes.
pub const NUM_CLASSES: usize = 12;

const LABEL_NAMES: [&str; NUM_CLASSES] = [
    "approaching",
    "departing",
    "handshaking",
    "high_five",
    "hugging",
    "kicking_left_leg",
    "kicking_right_leg",
    "pointing_left_hand",
    "pointing_right_hand",
    "punching_left_hand",
    "punching_right_hand",
    "pushing",
];

/// Interaction class id in `0..12`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InteractionLabel(u8);

impl InteractionLabel {
    pub fn new(id: usize) -> Result<Self> {
        if id < NUM_CLASSES {
            Ok(InteractionLabel(id as u8))
        } else {
            Err(Error::InvalidArgument(format!("label {id} outside 0..{NUM_CLASSES}")))
        }
    }

    pub fn id(self) -> usize {
        usize::from(self.0)
    }

    pub fn name(self) -> &'static str {
        LABEL_NAMES[self.id()]
    }

    pub fn all() -> impl Iterator<Item = InteractionLabel> {
        (0..NUM_CLASSES as u8).map(InteractionLabel)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        LABEL_NAMES.iter().position(|&n| n == name).map(|i| InteractionLabel(i as u8))
    }
}

impl fmt::Display for InteractionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw CSI grid for one trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsiRecording {
    n_t: usize,
    n_r: usize,
    n_p: usize,
    n_s: usize,
    data: Vec<ComplexSample>,
}

impl CsiRecording {
    pub fn new(n_t: usize, n_r: usize, n_p: usize, n_s: usize, data: Vec<ComplexSample>) -> Result<Self> {
        for (name, v) in [("n_t", n_t), ("n_r", n_r), ("n_p", n_p), ("n_s", n_s)] {
            if v == 0 {
                return Err(Error::ZeroDimension(name));
            }
        }
        let expected = n_t * n_r * n_p * n_s;
        if data.len() != expected {
            return Err(Error::shape(
                "CsiRecording::new",
                format!("{n_t}x{n_r}x{n_p}x{n_s} needs {expected} samples, got {}", data.len()),
            ));
        }
        Ok(CsiRecording { n_t, n_r, n_p, n_s, data })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_pairs(&self) -> usize {
        self.n_t * self.n_r
    }

    /// Pair index of transmitter `i`, receiver `j`.
    pub fn pair_index(&self, tx: usize, rx: usize) -> usize {
        assert!(tx < self.n_t && rx < self.n_r);
        tx * self.n_r + rx
    }

    /// Inverse of [`pair_index`](Self::pair_index).
    pub fn pair_antennas(&self, pair: usize) -> (usize, usize) {
        assert!(pair < self.n_pairs());
        (pair / self.n_r, pair % self.n_r)
    }

    pub fn data(&self) -> &[ComplexSample] {
        &self.data
    }

    pub fn get(&self, pair: usize, packet: usize, subcarrier: usize) -> ComplexSample {
        self.data[(pair * self.n_p + packet) * self.n_s + subcarrier]
    }

    /// Encode to the `CSI1` byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.data.len());
        out.extend_from_slice(&CSI_MAGIC);
        for (name, v) in [("n_t", self.n_t), ("n_r", self.n_r), ("n_p", self.n_p), ("n_s", self.n_s)] {
            let v = u16::try_from(v).map_err(|_| Error::DimensionOverflow { name, value: v })?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        for s in &self.data {
            out.push(s.re as u8);
            out.push(s.im as u8);
        }
        Ok(out)
    }

    /// Decode the `CSI1` byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != CSI_MAGIC {
            return Err(Error::BadMagic { expected: CSI_MAGIC, found: bytes[..bytes.len().min(4)].to_vec() });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN, actual: bytes.len() });
        }
        let field = |i: usize| usize::from(u16::from_le_bytes([bytes[4 + 2 * i], bytes[5 + 2 * i]]));
        let (n_t, n_r, n_p, n_s) = (field(0), field(1), field(2), field(3));
        for (name, v) in [("n_t", n_t), ("n_r", n_r), ("n_p", n_p), ("n_s", n_s)] {
            if v == 0 {
                return Err(Error::ZeroDimension(name));
            }
        }
        let expected = HEADER_LEN + 2 * n_t * n_r * n_p * n_s;
        if bytes.len() != expected {
            return Err(Error::Truncated { expected, actual: bytes.len() });
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(2)
            .map(|c| ComplexSample::new(c[0] as i8, c[1] as i8))
            .collect();
        CsiRecording::new(n_t, n_r, n_p, n_s, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

/// Read a `CSI1` file.
pub fn load_recording(path: impl AsRef<Path>) -> Result<CsiRecording> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CsiRecording::from_bytes(&bytes)
}

/// Standardise the packet count to `target_np`.
///
/// Recordings shorter than the target are discarded (`Ok(None)`). Excess
/// packets are removed from the front, where the trial's initial steady state
/// lives; the tail is only trimmed when the excess exceeds `steady_state`
/// packets. With `steady_state = None` all excess comes off the front.
pub fn gate_and_trim(rec: &CsiRecording, target_np: usize, steady_state: Option<usize>) -> Result<Option<CsiRecording>> {
    if target_np == 0 {
        return Err(Error::InvalidArgument("target packet count must be at least 1".into()));
    }
    if rec.n_p < target_np {
        return Ok(None);
    }
    let excess = rec.n_p - target_np;
    let front = steady_state.map_or(excess, |s| excess.min(s));
    let mut data = Vec::with_capacity(rec.n_pairs() * target_np * rec.n_s);
    for pair in 0..rec.n_pairs() {
        let start = (pair * rec.n_p + front) * rec.n_s;
        data.extend_from_slice(&rec.data[start..start + target_np * rec.n_s]);
    }
    CsiRecording::new(rec.n_t, rec.n_r, target_np, rec.n_s, data).map(Some)
}

/// Amplitude tensor `(n_t·n_r, n_p, n_s)`, `√(re² + im²)` evaluated in f64.
pub fn amplitude<T: Scalar>(rec: &CsiRecording) -> Tensor<T> {
    let data = rec.data.iter().map(|s| T::of(s.amplitude())).collect();
    Tensor::new([rec.n_pairs(), rec.n_p, rec.n_s], data).expect("recording invariant")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n_t: usize, n_r: usize, n_p: usize, n_s: usize) -> CsiRecording {
        let n = n_t * n_r * n_p * n_s;
        let data = (0..n).map(|i| ComplexSample::new((i % 251) as u8 as i8, (i % 7) as i8)).collect();
        CsiRecording::new(n_t, n_r, n_p, n_s, data).unwrap()
    }

    #[test]
    fn twelve_distinct_labels() {
        let names: std::collections::HashSet<_> = InteractionLabel::all().map(|l| l.name()).collect();
        assert_eq!(names.len(), 12);
        assert!(InteractionLabel::new(12).is_err());
        assert_eq!(InteractionLabel::from_name("pushing").unwrap().id(), 11);
    }

    #[test]
    fn pair_index_is_transmitter_major_and_bijective() {
        let rec = ramp(2, 3, 2, 2);
        let mut seen = std::collections::HashSet::new();
        for i in 0..2 {
            for j in 0..3 {
                let p = rec.pair_index(i, j);
                assert_eq!(p, i * 3 + j);
                assert_eq!(rec.pair_antennas(p), (i, j));
                assert!(seen.insert(p));
            }
        }
    }

    #[test]
    fn paper_shaped_header_decodes() {
        let rec = ramp(2, 3, 1500, 30);
        let back = CsiRecording::from_bytes(&rec.to_bytes().unwrap()).unwrap();
        assert_eq!((back.n_pairs(), back.n_p(), back.n_s()), (6, 1500, 30));
        assert_eq!(back, rec);
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let full = ramp(2, 3, 1500, 30).to_bytes().unwrap();
        let short = ramp(2, 3, 1499, 30).to_bytes().unwrap();
        // header claims 1500 packets, payload holds 1499
        let mut bytes = full[..HEADER_LEN].to_vec();
        bytes.extend_from_slice(&short[HEADER_LEN..]);
        match CsiRecording::from_bytes(&bytes) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, 12 + 2 * 6 * 1500 * 30);
                assert_eq!(actual, 12 + 2 * 6 * 1499 * 30);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_zero_dimension() {
        let mut bytes = ramp(1, 1, 2, 2).to_bytes().unwrap();
        bytes[3] = b'2';
        assert!(matches!(CsiRecording::from_bytes(&bytes), Err(Error::BadMagic { .. })));
        let mut bytes = ramp(1, 1, 2, 2).to_bytes().unwrap();
        bytes[8] = 0;
        bytes[9] = 0;
        assert!(matches!(CsiRecording::from_bytes(&bytes), Err(Error::ZeroDimension("n_p"))));
    }

    #[test]
    fn gate_discards_short_and_keeps_exact() {
        let short = ramp(1, 1, 1040, 2);
        assert!(gate_and_trim(&short, 1500, None).unwrap().is_none());
        let exact = ramp(1, 2, 1500, 2);
        assert_eq!(gate_and_trim(&exact, 1500, None).unwrap().unwrap(), exact);
        assert!(gate_and_trim(&exact, 0, None).is_err());
    }

    #[test]
    fn gate_trims_the_front_first() {
        let long = ramp(2, 1, 2249, 3);
        let trimmed = gate_and_trim(&long, 1500, None).unwrap().unwrap();
        assert_eq!(trimmed.n_p(), 1500);
        for pair in 0..2 {
            for p in [0, 1, 750, 1499] {
                for s in 0..3 {
                    assert_eq!(trimmed.get(pair, p, s), long.get(pair, p + 749, s));
                }
            }
        }
        // With a bounded steady state the remainder comes off the tail.
        let bounded = gate_and_trim(&long, 1500, Some(500)).unwrap().unwrap();
        assert_eq!(bounded.get(1, 0, 0), long.get(1, 500, 0));
        assert_eq!(bounded.get(1, 1499, 2), long.get(1, 1999, 2));
    }

    #[test]
    fn amplitude_examples() {
        let rec = CsiRecording::new(
            1,
            1,
            3,
            1,
            vec![ComplexSample::new(3, 4), ComplexSample::new(0, 0), ComplexSample::new(-128, 0)],
        )
        .unwrap();
        let a = amplitude::<f64>(&rec);
        assert_eq!(a.shape(), &[1, 3, 1]);
        assert_eq!(a.data(), &[5.0, 0.0, 128.0]);
    }

    fn arb_recording() -> impl Strategy<Value = CsiRecording> {
        (1usize..3, 1usize..4, 1usize..20, 1usize..6).prop_flat_map(|(t, r, p, s)| {
            proptest::collection::vec((any::<i8>(), any::<i8>()), t * r * p * s).prop_map(move |v| {
                let data = v.into_iter().map(|(re, im)| ComplexSample::new(re, im)).collect();
                CsiRecording::new(t, r, p, s, data).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip(rec in arb_recording()) {
            let bytes = rec.to_bytes().unwrap();
            let back = CsiRecording::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            prop_assert_eq!(back, rec);
        }

        #[test]
        fn gate_output_is_exact_or_absent(rec in arb_recording(), target in 1usize..25) {
            match gate_and_trim(&rec, target, None).unwrap() {
                None => prop_assert!(rec.n_p() < target),
                Some(out) => {
                    prop_assert_eq!(out.n_p(), target);
                    let off = rec.n_p() - target;
                    for pair in 0..rec.n_pairs() {
                        for p in 0..target {
                            prop_assert_eq!(out.get(pair, p, 0), rec.get(pair, p + off, 0));
                        }
                    }
                }
            }
        }

        #[test]
        fn amplitude_non_negative_and_sign_symmetric(re in any::<i8>(), im in any::<i8>()) {
            let a = ComplexSample::new(re, im).amplitude();
            prop_assert!(a >= 0.0);
            let (nr, ni) = (re.wrapping_neg(), im.wrapping_neg());
            // −(−128) is not representable in i8; skip that corner.
            prop_assume!(re != i8::MIN && im != i8::MIN);
            prop_assert_eq!(ComplexSample::new(nr, ni).amplitude(), a);
        }
    }
}
