use serde::{Deserialize, Serialize};

/// Training-split popularity and the top-`x`% popular set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    /// Interaction count per item index; entry 0 (padding) is always 0.
    pub popularity: Vec<u64>,
    popular: Vec<bool>,
    pub popular_count: usize,
    pub x_percent: f64,
}

/// `ceil(n · x / 100)`, treating values within 1e-9 of an integer as exact.
pub fn popular_set_size(n: usize, x_percent: f64) -> usize {
    let v = n as f64 * x_percent / 100.0;
    let r = v.round();
    let size = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    (size.max(0.0) as usize).min(n)
}

impl ItemCatalog {
    /// Counts every occurrence of each item across `sessions`.
    pub fn from_sessions<'a>(n_items: usize, sessions: impl IntoIterator<Item = &'a [usize]>, x_percent: f64) -> Self {
        let mut popularity = vec![0u64; n_items + 1];
        for s in sessions {
            for &i in s {
                popularity[i] += 1;
            }
        }
        Self::from_counts(popularity, x_percent)
    }

    /// `counts[0]` is the padding slot and is ignored.
    pub fn from_counts(mut popularity: Vec<u64>, x_percent: f64) -> Self {
        if let Some(p) = popularity.first_mut() {
            *p = 0;
        }
        let n = popularity.len().saturating_sub(1);
        let mut order: Vec<usize> = (1..=n).collect();
        order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));
        let popular_count = popular_set_size(n, x_percent);
        let mut popular = vec![false; n + 1];
        for &i in &order[..popular_count] {
            popular[i] = true;
        }
        ItemCatalog {
            popularity,
            popular,
            popular_count,
            x_percent,
        }
    }

    pub fn n_items(&self) -> usize {
        self.popularity.len() - 1
    }

    pub fn is_popular(&self, item: usize) -> bool {
        self.popular.get(item).copied().unwrap_or(false)
    }

    pub fn popular_items(&self) -> Vec<usize> {
        (1..=self.n_items()).filter(|&i| self.popular[i]).collect()
    }

    /// Complement of the popular set within `1..=n`.
    pub fn long_tail_items(&self) -> Vec<usize> {
        (1..=self.n_items()).filter(|&i| !self.popular[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_ten_percent_of_ten() {
        let mut counts = vec![0u64];
        counts.extend((1..=10).map(|i| 11 - i));
        let c = ItemCatalog::from_counts(counts, 10.0);
        assert_eq!(c.popular_items(), vec![1]);
    }

    #[test]
    fn boundary_tie_admits_lower_index() {
        let c = ItemCatalog::from_counts(vec![0, 1, 5, 5, 1, 1, 1, 1, 1, 1, 1], 10.0);
        assert_eq!(c.popular_items(), vec![2]);
    }

    #[test]
    fn rc15_like_size() {
        // ceil(26702 * 0.1) = ceil(2670.2)
        assert_eq!(popular_set_size(26_702, 10.0), 2_671);
        assert_eq!(popular_set_size(10, 10.0), 1);
        assert_eq!(popular_set_size(100, 100.0), 100);
        assert_eq!(popular_set_size(7, 50.0), 4);
    }

    #[test]
    fn counts_every_occurrence() {
        let sessions: Vec<Vec<usize>> = vec![vec![1, 1, 2], vec![3, 1]];
        let c = ItemCatalog::from_sessions(3, sessions.iter().map(Vec::as_slice), 34.0);
        assert_eq!(c.popularity, vec![0, 3, 1, 1]);
        assert_eq!(c.popular_items(), vec![1, 2]);
    }
}
