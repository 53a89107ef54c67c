use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordCluster {
    pub cluster_id: u32,
    /// Most frequent member keyword.
    pub representative: String,
    pub members: Vec<String>,
}

/// Partition of the keyword vocabulary into clusters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "ClusterMapRepr", into = "ClusterMapRepr")]
pub struct KeywordClusterMap {
    clusters: Vec<KeywordCluster>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct ClusterMapRepr {
    clusters: Vec<KeywordCluster>,
}

impl From<ClusterMapRepr> for KeywordClusterMap {
    fn from(r: ClusterMapRepr) -> Self {
        let index = r
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |m| (m.clone(), c.cluster_id)))
            .collect();
        Self {
            clusters: r.clusters,
            index,
        }
    }
}

impl From<KeywordClusterMap> for ClusterMapRepr {
    fn from(m: KeywordClusterMap) -> Self {
        Self {
            clusters: m.clusters,
        }
    }
}

impl PartialEq for KeywordClusterMap {
    fn eq(&self, other: &Self) -> bool {
        self.clusters == other.clusters
    }
}

impl KeywordClusterMap {
    /// Build from member groups. Representatives are the most frequent member
    /// (ties by name) and cluster ids follow representative frequency order.
    pub fn from_groups(groups: Vec<Vec<String>>, freq: &HashMap<String, usize>) -> Result<Self> {
        let f = |k: &str| freq.get(k).copied().unwrap_or(0);
        let by_freq = |a: &String, b: &String| f(b).cmp(&f(a)).then_with(|| a.cmp(b));
        let mut clusters: Vec<KeywordCluster> = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|mut members| {
                members.sort_by(by_freq);
                KeywordCluster {
                    cluster_id: 0,
                    representative: members[0].clone(),
                    members,
                }
            })
            .collect();
        clusters.sort_by(|a, b| by_freq(&a.representative, &b.representative));
        let mut index = HashMap::new();
        for (i, c) in clusters.iter_mut().enumerate() {
            c.cluster_id = i as u32;
            for m in &c.members {
                if index.insert(m.clone(), i as u32).is_some() {
                    return Err(Error::Invalid(format!("keyword {m:?} appears in two clusters")));
                }
            }
        }
        Ok(Self { clusters, index })
    }

    pub fn clusters(&self) -> &[KeywordCluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn n_keywords(&self) -> usize {
        self.index.len()
    }

    pub fn cluster_of(&self, keyword: &str) -> Option<u32> {
        self.index.get(keyword).copied()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representative_is_most_frequent_and_ids_follow_frequency() {
        let freq: HashMap<String, usize> = [("love", 9), ("loved", 3), ("hero", 12), ("villain", 4)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let groups = vec![
            vec!["loved".into(), "love".into()],
            vec!["villain".into(), "hero".into()],
        ];
        let map = KeywordClusterMap::from_groups(groups, &freq).unwrap();
        assert_eq!(map.clusters()[0].representative, "hero");
        assert_eq!(map.clusters()[1].representative, "love");
        assert_eq!(map.cluster_of("loved"), Some(1));
        let json = serde_json::to_string(&map).unwrap();
        let back: KeywordClusterMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.cluster_of("villain"), Some(0));
    }

    #[test]
    fn overlapping_groups_are_rejected() {
        let groups = vec![vec!["a".into()], vec!["a".into(), "b".into()]];
        assert!(KeywordClusterMap::from_groups(groups, &HashMap::new()).is_err());
    }
}
