use super::ScoringModel;
use crate::dataio::InteractionMatrix;

/// Non-personalized popularity ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct TopPopular {
    counts: Vec<f64>,
}

impl TopPopular {
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

pub fn fit_top_popular(train: &InteractionMatrix) -> TopPopular {
    TopPopular {
        counts: train.item_counts().into_iter().map(|c| c as f64).collect(),
    }
}

impl ScoringModel for TopPopular {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score(&self, _user: usize) -> Vec<f64> {
        self.counts.clone()
    }
}
