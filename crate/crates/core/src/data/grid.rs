//! Pixel grids: multi-object label masks, binary masks, probability maps.

/// H×W grid of object identifiers, row-major, 0 = background.
///
/// Each pixel carries exactly one label; ids fit in 16 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Self {
        assert!(width > 0 && height > 0, "dimensions must be positive");
        assert_eq!(labels.len(), width * height, "labels length must be W*H");
        LabelMask {
            width,
            height,
            labels,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, id: u16) {
        self.labels[y * self.width + x] = id;
    }

    /// Distinct non-zero ids present, ascending.
    pub fn object_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self.labels.iter().copied().filter(|&v| v != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// H×W grid of {0,1}, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "dimensions must be positive");
        assert_eq!(bits.len(), width * height, "bits length must be W*H");
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits[y * self.width + x] = bit;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }
}

/// H×W grid of foreground probabilities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, probs: Vec<f64>) -> Self {
        assert!(width > 0 && height > 0, "dimensions must be positive");
        assert_eq!(probs.len(), width * height, "probs length must be W*H");
        assert!(
            probs.iter().all(|p| (0.0..=1.0).contains(p)),
            "probabilities must lie in [0,1]"
        );
        ProbabilityMap {
            width,
            height,
            probs,
        }
    }

    pub fn constant(width: usize, height: usize, p: f64) -> Self {
        Self::new(width, height, vec![p; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.probs[y * self.width + x]
    }

    /// Binarizes at a strict threshold: bit = 1 iff p > threshold.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        let bits = self
            .probs
            .iter()
            .map(|&p| u8::from(p > threshold))
            .collect();
        BinaryMask::new(self.width, self.height, bits)
    }
}

/// Indicator mask of the pixels labelled `object_id`.
///
/// An id absent from the mask yields an all-zero result.
pub fn binarize(mask: &LabelMask, object_id: u16) -> BinaryMask {
    assert!(object_id >= 1, "object ids start at 1");
    let bits = mask
        .labels
        .iter()
        .map(|&v| u8::from(v == object_id))
        .collect();
    BinaryMask::new(mask.width, mask.height, bits)
}
