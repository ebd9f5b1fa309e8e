use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RawRecording;
use crate::error::{Result, ZcpError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Disjoint user partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl UserSplit {
    pub fn split_of(&self, user: &str) -> Option<Split> {
        if self.train.iter().any(|u| u == user) {
            Some(Split::Train)
        } else if self.val.iter().any(|u| u == user) {
            Some(Split::Val)
        } else if self.test.iter().any(|u| u == user) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// Test takes ceil(20 %) of users; validation takes ceil(20 %) of the rest.
pub fn split_sizes(n_users: usize) -> (usize, usize, usize) {
    let test = n_users.div_ceil(5);
    let val = (n_users - test).div_ceil(5);
    (n_users - test - val, val, test)
}

pub fn split_by_users(recordings: &[RawRecording], seed: u64) -> Result<UserSplit> {
    let mut users: Vec<String> = recordings.iter().map(|r| r.user_id.clone()).collect();
    users.sort();
    users.dedup();
    if users.len() < 3 {
        return Err(ZcpError::TooFewUsers(users.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let (_, n_val, n_test) = split_sizes(users.len());
    let mut test = users[..n_test].to_vec();
    let mut val = users[n_test..n_test + n_val].to_vec();
    let mut train = users[n_test + n_val..].to_vec();
    test.sort();
    val.sort();
    train.sort();
    Ok(UserSplit { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(n: usize) -> Vec<RawRecording> {
        (0..n)
            .map(|i| RawRecording {
                user_id: format!("u{i:02}"),
                sample_rate_hz: 50.0,
                samples: vec![],
                labels: vec![],
            })
            .collect()
    }

    #[test]
    fn ten_users() {
        let s = split_by_users(&users(10), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn three_users_one_each() {
        let s = split_by_users(&users(3), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn too_few_users() {
        assert!(matches!(split_by_users(&users(2), 1), Err(ZcpError::TooFewUsers(2))));
    }

    #[test]
    fn seeded_partition_repeats() {
        assert_eq!(split_by_users(&users(9), 4).unwrap(), split_by_users(&users(9), 4).unwrap());
    }
}
