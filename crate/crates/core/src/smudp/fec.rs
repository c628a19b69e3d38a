//! Single-parity XOR erasure code over groups of consecutive data packets.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FecGroup {
    pub group_id: u64,
    /// Data packet indices covered, in order.
    pub members: Vec<u64>,
    /// XOR of the member payloads, each zero-padded to the longest one.
    pub parity: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    NothingMissing,
    Recovered { index: u64, payload: Vec<u8> },
    Unrecoverable { missing: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FecError {
    #[error("FEC group has no members")]
    EmptyGroup,
    #[error("packet {0} is not a member of the group")]
    NotAMember(u64),
    #[error("member payload of {len} bytes exceeds parity length {parity}")]
    TooLong { len: usize, parity: usize },
}

fn xor_into(acc: &mut [u8], block: &[u8]) {
    for (a, b) in acc.iter_mut().zip(block) {
        *a ^= b;
    }
}

pub fn encode(group_id: u64, members: &[(u64, &[u8])]) -> Result<FecGroup, FecError> {
    if members.is_empty() {
        return Err(FecError::EmptyGroup);
    }
    let width = members.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let mut parity = vec![0u8; width];
    for (_, payload) in members {
        xor_into(&mut parity, payload);
    }
    Ok(FecGroup {
        group_id,
        members: members.iter().map(|(i, _)| *i).collect(),
        parity,
    })
}

/// Rebuild the one missing member from parity and the rest. `missing_len`
/// trims the zero padding; `None` keeps the full parity width.
pub fn decode(group: &FecGroup, received: &[(u64, &[u8])], missing_len: Option<usize>) -> Result<Decoded, FecError> {
    for (i, payload) in received {
        if !group.members.contains(i) {
            return Err(FecError::NotAMember(*i));
        }
        if payload.len() > group.parity.len() {
            return Err(FecError::TooLong {
                len: payload.len(),
                parity: group.parity.len(),
            });
        }
    }
    let missing: Vec<u64> = group
        .members
        .iter()
        .copied()
        .filter(|m| !received.iter().any(|(i, _)| i == m))
        .collect();
    match missing.as_slice() {
        [] => Ok(Decoded::NothingMissing),
        [index] => {
            let mut payload = group.parity.clone();
            for (_, p) in received {
                xor_into(&mut payload, p);
            }
            payload.truncate(missing_len.unwrap_or(payload.len()));
            Ok(Decoded::Recovered { index: *index, payload })
        }
        _ => Ok(Decoded::Unrecoverable { missing }),
    }
}
