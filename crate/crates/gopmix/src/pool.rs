//! Per-phoneme quadruplet pools: every aligned phone instance in a corpus,
//! stored with its feature slices and GOP score, grouped by phone identity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gop::{utterance_gops, GopVariant, PhoneClassMap};
use crate::types::{PhoneId, PhonePoolSet, Quadruplet, UtteranceRecord};

/// Segments longer than this many frames are flagged in the build report
/// (they usually indicate alignment problems) but are still pooled.
pub const LONG_SEGMENT_FRAMES: usize = 200;

/// One flagged over-long segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongSegment {
    pub utt_id: String,
    pub segment_index: usize,
    pub frames: usize,
}

/// Summary of a pool build.
#[derive(Debug, Clone, Default)]
pub struct PoolBuildStats {
    pub utterances: usize,
    pub segments: usize,
    pub long_segments: Vec<LongSegment>,
}

/// Harvests every aligned phone instance from `records` into per-phoneme
/// pools. Feature slices keep the full segment; over-long segments are
/// flagged in the stats, never dropped.
pub fn build_pool<I>(
    records: I,
    map: &PhoneClassMap,
    variant: GopVariant,
) -> Result<(PhonePoolSet, PoolBuildStats)>
where
    I: IntoIterator<Item = Result<UtteranceRecord>>,
{
    let mut pools = PhonePoolSet::new(map.inventory().clone());
    let mut stats = PoolBuildStats::default();
    for rec in records {
        let rec = rec?;
        let gops = utterance_gops(&rec, map, variant)?;
        for (i, sg) in gops.iter().enumerate() {
            let seg = sg.segment;
            let mfcc_seg = rec.mfcc.slice_rows(seg.start, seg.end).map_err(|e| {
                Error::InvalidInput(format!("utterance {} segment {i}: {e}", rec.utt_id))
            })?;
            let deep_seg = rec.deep.slice_rows(seg.start, seg.end).map_err(|e| {
                Error::InvalidInput(format!("utterance {} segment {i}: {e}", rec.utt_id))
            })?;
            if seg.frames() > LONG_SEGMENT_FRAMES {
                stats.long_segments.push(LongSegment {
                    utt_id: rec.utt_id.clone(),
                    segment_index: i,
                    frames: seg.frames(),
                });
            }
            pools.push(Quadruplet::new(seg.phone, mfcc_seg, deep_seg, sg.gop)?);
            stats.segments += 1;
        }
        stats.utterances += 1;
    }
    Ok((pools, stats))
}

/// Draws one quadruplet uniformly (with replacement) from the phone's pool.
pub fn sample_quadruplet<'a, R: Rng + ?Sized>(
    pools: &'a PhonePoolSet,
    phone: PhoneId,
    rng: &mut R,
) -> Result<&'a Quadruplet> {
    let pool = pools.pool(phone);
    if pool.is_empty() {
        return Err(Error::EmptyPool {
            symbol: pools.inventory().symbol(phone).to_string(),
        });
    }
    Ok(&pool[rng.random_range(0..pool.len())])
}

/// Per-phone pool summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonePoolStat {
    pub symbol: String,
    pub count: usize,
    pub mean_gop: f64,
    pub mean_frames: f64,
}

/// Per-phone counts and means, in inventory order. Empty pools report count
/// 0 with zero means.
pub fn pool_stats(pools: &PhonePoolSet) -> Vec<PhonePoolStat> {
    pools
        .phones()
        .map(|phone| {
            let pool = pools.pool(phone);
            let n = pool.len();
            let (mean_gop, mean_frames) = if n == 0 {
                (0.0, 0.0)
            } else {
                (
                    pool.iter().map(|q| q.gop).sum::<f64>() / n as f64,
                    pool.iter().map(|q| q.frames() as f64).sum::<f64>() / n as f64,
                )
            };
            PhonePoolStat {
                symbol: pools.inventory().symbol(phone).to_string(),
                count: n,
                mean_gop,
                mean_frames,
            }
        })
        .collect()
}
