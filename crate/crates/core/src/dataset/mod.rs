//! Dataset ingestion, splitting, symmetric label-noise injection and
//! quarter-turn rotation augmentation.

pub mod cifar;
mod noise;
mod normalize;
pub mod prepared;
mod rotate;
mod split;
pub mod synthetic;

pub use cifar::{load_cifar10, read_batch_file, write_batch_file, RECORD_BYTES};
pub use noise::{inject_noise, read_noise_manifest, write_noise_manifest, NoiseSummary, RelabelPolicy};
pub use normalize::ChannelStats;
pub use prepared::{prepare, PrepareSpec, PreparedData};
pub use rotate::{rotate_all_four, rotate_batch, rotate_image, RotatedSample};
pub use split::{balanced_subset, split, SplitSpec};

/// Number of classes in CIFAR-10.
pub const NUM_CLASSES: usize = 10;

/// One image with its labels.
///
/// Pixels are channel-planar (all R, then G, then B), row-major within a
/// plane, exactly as stored in CIFAR-10 binary records. `true_label` and
/// `is_noisy` exist only for evaluation; training and detection read
/// `observed_label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: u32,
    pub image: Vec<u8>,
    pub true_label: u8,
    pub observed_label: u8,
    pub is_noisy: bool,
}

impl SampleRecord {
    pub fn clean(id: u32, image: Vec<u8>, label: u8) -> Self {
        SampleRecord {
            id,
            image,
            true_label: label,
            observed_label: label,
            is_noisy: false,
        }
    }

    pub fn set_observed(&mut self, label: u8) {
        self.observed_label = label;
        self.is_noisy = self.true_label != label;
    }
}
