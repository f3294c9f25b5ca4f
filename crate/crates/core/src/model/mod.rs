//! Network definitions: the segmentation network (encoder-decoder plus
//! optional shape regularizer) and the shape discriminator.

mod discriminator;
mod layers;
mod params;
mod segmenter;

pub use discriminator::{DiscriminatorConfig, ShapeDiscriminator};
pub use layers::{Conv, ConvBlock, DeformConv, GroupNorm};
pub use params::{kaiming_uniform, Bindings, ParamId, ParamStore};
pub use segmenter::{EdfcnConfig, SegmentationConfig, SegmentationModel, ShapeRegularizer, SR_DILATION};
