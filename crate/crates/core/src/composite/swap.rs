use super::message::{CompositeMessage, MessageError};
use super::{composite_sequential, over, VisibilityOrder};
use crate::image::{ImageError, LocalImage};
use crate::scalar::Scalar;
use crate::transport::{Transport, TransportError};
use thiserror::Error;

/// Round index carried by the final collection messages.
pub const GATHER_ROUND: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositeError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Message(#[from] MessageError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("visibility order is not a permutation of {0} ranks")]
    BadOrder(usize),
    #[error("protocol violation from rank {from}: {detail}")]
    Protocol { from: usize, detail: String },
}

fn expect_message<S: Scalar>(
    transport: &dyn Transport,
    from: usize,
    round: u32,
    span: (usize, usize),
    total: usize,
) -> Result<CompositeMessage<S>, CompositeError> {
    let msg = CompositeMessage::<S>::decode(&transport.receive(from)?)?;
    let violation = |detail: String| CompositeError::Protocol { from, detail };
    if msg.round != round {
        return Err(violation(format!("expected round {round}, got {}", msg.round)));
    }
    if msg.sender as usize != from {
        return Err(violation(format!("sender field says {}", msg.sender)));
    }
    let (offset, len) = (msg.offset as usize, msg.pixels.len());
    if offset + len > total {
        return Err(violation(format!("span {offset}+{len} beyond {total} pixels")));
    }
    if span != (usize::MAX, usize::MAX) && (offset, len) != span {
        return Err(violation(format!("span {offset}+{len}, expected {}+{}", span.0, span.1)));
    }
    Ok(msg)
}

/// Sort-last compositing by binary swap; the full frame ends up on rank 0.
///
/// Ranks pair up by their position in the visibility order, so every group being
/// merged is a contiguous run of that order and the non-commutative `over` is applied
/// front to back. Each round halves the span a rank is responsible for; afterwards
/// rank 0 collects the disjoint spans. Non-power-of-two rank counts fall back to
/// [`direct_send`]. Returns the composited image on rank 0, `None` elsewhere.
pub fn binary_swap<S: Scalar>(
    transport: &dyn Transport,
    local: &LocalImage<S>,
    order: &VisibilityOrder,
) -> Result<Option<LocalImage<S>>, CompositeError> {
    let size = transport.size();
    if !order.is_permutation(size) {
        return Err(CompositeError::BadOrder(size));
    }
    if size == 1 {
        return Ok(Some(local.clone()));
    }
    if !size.is_power_of_two() {
        return direct_send(transport, local, order);
    }
    let rank = transport.rank();
    let me = order.position(rank).expect("rank in order");
    let total = local.pixel_count();
    let mut work = local.pixels.clone();
    let (mut offset, mut len) = (0usize, total);

    for round in 0..size.trailing_zeros() {
        let bit = 1usize << round;
        let peer_pos = me ^ bit;
        let peer = order.ranks()[peer_pos];
        let half = len / 2;
        let lower = (offset, half);
        let upper = (offset + half, len - half);
        let (keep, give) = if me & bit == 0 { (lower, upper) } else { (upper, lower) };

        let outgoing = CompositeMessage {
            round,
            sender: rank as u32,
            offset: give.0 as u64,
            pixels: work[give.0..give.0 + give.1].to_vec(),
        };
        transport.send(peer, outgoing.encode())?;
        let incoming = expect_message::<S>(transport, peer, round, keep, total)?;

        let mine = &mut work[keep.0..keep.0 + keep.1];
        if me < peer_pos {
            for (m, t) in mine.iter_mut().zip(&incoming.pixels) {
                *m = over(*m, *t);
            }
        } else {
            for (m, t) in mine.iter_mut().zip(&incoming.pixels) {
                *m = over(*t, *m);
            }
        }
        (offset, len) = keep;
    }

    if rank != 0 {
        let strip = CompositeMessage {
            round: GATHER_ROUND,
            sender: rank as u32,
            offset: offset as u64,
            pixels: work[offset..offset + len].to_vec(),
        };
        transport.send(0, strip.encode())?;
        return Ok(None);
    }

    let mut image = LocalImage {
        width: local.width,
        height: local.height,
        pixels: vec![Default::default(); total],
        order_key: 0,
    };
    let mut covered = vec![false; total];
    image.pixels[offset..offset + len].copy_from_slice(&work[offset..offset + len]);
    covered[offset..offset + len].iter_mut().for_each(|c| *c = true);
    for from in 1..size {
        let strip = expect_message::<S>(transport, from, GATHER_ROUND, (usize::MAX, usize::MAX), total)?;
        let (o, n) = (strip.offset as usize, strip.pixels.len());
        if covered[o..o + n].iter().any(|&c| c) {
            return Err(CompositeError::Protocol {
                from,
                detail: format!("span {o}+{n} overlaps another strip"),
            });
        }
        covered[o..o + n].iter_mut().for_each(|c| *c = true);
        image.pixels[o..o + n].copy_from_slice(&strip.pixels);
    }
    if covered.iter().any(|c| !c) {
        return Err(CompositeError::Protocol {
            from: 0,
            detail: "collected strips leave pixels uncovered".into(),
        });
    }
    Ok(Some(image))
}

/// Every rank ships its whole image to rank 0, which folds them in visibility order.
pub fn direct_send<S: Scalar>(
    transport: &dyn Transport,
    local: &LocalImage<S>,
    order: &VisibilityOrder,
) -> Result<Option<LocalImage<S>>, CompositeError> {
    let size = transport.size();
    if !order.is_permutation(size) {
        return Err(CompositeError::BadOrder(size));
    }
    let rank = transport.rank();
    let total = local.pixel_count();
    if rank != 0 {
        let msg = CompositeMessage {
            round: GATHER_ROUND,
            sender: rank as u32,
            offset: 0,
            pixels: local.pixels.clone(),
        };
        transport.send(0, msg.encode())?;
        return Ok(None);
    }
    let mut images = Vec::with_capacity(size);
    images.push(local.clone());
    for from in 1..size {
        let msg = expect_message::<S>(transport, from, GATHER_ROUND, (0, total), total)?;
        images.push(LocalImage {
            width: local.width,
            height: local.height,
            pixels: msg.pixels,
            order_key: 0,
        });
    }
    Ok(Some(composite_sequential(&images, order.ranks())?))
}
