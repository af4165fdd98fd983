use super::{BackendReply, RankBackend, RankRequest};
use crate::domain::truth_order;
use crate::error::Result;

/// Always returns the ground-truth order: descending score, ties by ascending id.
#[derive(Clone, Copy, Debug, Default)]
pub struct PerfectBackend;

impl RankBackend for PerfectBackend {
    fn rank(&self, req: &RankRequest<'_>) -> Result<BackendReply> {
        Ok(BackendReply::ok(truth_order(req.docs)?))
    }

    fn name(&self) -> &'static str {
        "perfect"
    }
}
