//! Logical topology: groups and communicators over world ranks.

/// World rank of a process.
pub type Rank = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommError {
    #[error("rank {rank} is not a member of communicator {members:?}")]
    NotAMember { rank: Rank, members: Vec<Rank> },
    #[error("group must contain at least one rank")]
    Empty,
    #[error("rank {0} listed twice")]
    DuplicateRank(Rank),
    #[error("rank {rank} out of range for world of size {world}")]
    OutOfRange { rank: Rank, world: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupHandle {
    members: Vec<Rank>,
}

impl GroupHandle {
    pub fn members(&self) -> &[Rank] {
        &self.members
    }
}

/// Ordered set of world ranks; a process's communicator rank is its index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommHandle {
    members: Vec<Rank>,
}

impl CommHandle {
    pub fn world(size: u32) -> CommHandle {
        CommHandle {
            members: (0..size).collect(),
        }
    }

    pub fn members(&self) -> &[Rank] {
        &self.members
    }

    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn rank_of(&self, world_rank: Rank) -> Result<u32, CommError> {
        self.members
            .iter()
            .position(|&m| m == world_rank)
            .map(|i| i as u32)
            .ok_or_else(|| CommError::NotAMember {
                rank: world_rank,
                members: self.members.clone(),
            })
    }

    /// World rank of communicator rank `r`.
    pub fn world_rank(&self, r: u32) -> Option<Rank> {
        self.members.get(r as usize).copied()
    }

    pub fn contains(&self, world_rank: Rank) -> bool {
        self.members.contains(&world_rank)
    }
}

pub fn comm_rank(comm: &CommHandle, me: Rank) -> Result<u32, CommError> {
    comm.rank_of(me)
}

pub fn comm_size(comm: &CommHandle) -> u32 {
    comm.size()
}

pub fn group_from_ranks(ranks: &[Rank], world_size: u32) -> Result<GroupHandle, CommError> {
    if ranks.is_empty() {
        return Err(CommError::Empty);
    }
    for (i, &r) in ranks.iter().enumerate() {
        if r >= world_size {
            return Err(CommError::OutOfRange {
                rank: r,
                world: world_size,
            });
        }
        if ranks[..i].contains(&r) {
            return Err(CommError::DuplicateRank(r));
        }
    }
    Ok(GroupHandle {
        members: ranks.to_vec(),
    })
}

pub fn comm_from_group(group: &GroupHandle) -> CommHandle {
    CommHandle {
        members: group.members.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn world_rank_is_identity() {
        let w = CommHandle::world(4);
        assert_eq!(comm_rank(&w, 2), Ok(2));
        assert_eq!(comm_size(&w), 4);
        assert_eq!(comm_size(&CommHandle::world(1)), 1);
    }

    #[test]
    fn rank_is_index_in_member_list() {
        let c = comm_from_group(&group_from_ranks(&[3, 1], 4).unwrap());
        assert_eq!(comm_rank(&c, 1), Ok(1));
        assert_eq!(comm_rank(&c, 3), Ok(0));
        assert!(matches!(comm_rank(&c, 0), Err(CommError::NotAMember { .. })));
        assert_eq!(comm_size(&c), 2);
    }

    #[test]
    fn group_errors() {
        assert_eq!(group_from_ranks(&[], 4), Err(CommError::Empty));
        assert_eq!(group_from_ranks(&[0, 0], 4), Err(CommError::DuplicateRank(0)));
        assert_eq!(
            group_from_ranks(&[0, 4], 4),
            Err(CommError::OutOfRange { rank: 4, world: 4 })
        );
        assert_eq!(group_from_ranks(&[0, 2], 4).unwrap().members(), &[0, 2]);
    }

    proptest! {
        #[test]
        fn comm_rank_is_a_bijection_onto_0_size(
            world in 1u32..12,
            picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..12),
        ) {
            let mut ranks = Vec::new();
            for p in picks {
                let r = p.index(world as usize) as u32;
                if !ranks.contains(&r) {
                    ranks.push(r);
                }
            }
            let comm = comm_from_group(&group_from_ranks(&ranks, world).unwrap());
            let mut seen = vec![false; comm.size() as usize];
            for &m in comm.members() {
                let r = comm_rank(&comm, m).unwrap();
                prop_assert!(r < comm_size(&comm));
                prop_assert!(!seen[r as usize]);
                seen[r as usize] = true;
                prop_assert_eq!(comm.world_rank(r), Some(m));
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }
}
