//! Region proposals, ROI pooling and the box classification/regression head.

mod anchors;
mod bbox;
mod head;
mod io;
mod nms;
mod roi_pool;
mod rpn;
mod targets;

pub use anchors::{generate_anchors, AnchorConfig};
pub use bbox::{decode, encode, iou, BBox};
pub use head::{det_loss, DetCache, DetLoss, DetectionHead};
pub use io::{read_detections, write_detections};
pub use nms::nms;
pub use roi_pool::{roi_pool_backward, roi_pool_forward, NO_ARGMAX};
pub use rpn::{proposals, rpn_loss, ProposalConfig, RpnCache, RpnHead, RpnLoss, RpnOutput};
pub use targets::{
    assign_rpn_targets, sample_rois, RoiBatch, RoiSampleConfig, RpnTargetConfig, RpnTargets,
};
