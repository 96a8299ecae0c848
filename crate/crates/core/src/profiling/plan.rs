use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::simulate::sample_disjoint;
use crate::trace::TraceSet;

/// Split sizes for one profiling repeat: training and validation sets come
/// from the first `d1` traces, the attack set from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub d1: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Redraw the training/validation split (up to this many times) when the
    /// training set misses a class. 0 surfaces the missing class as an error.
    pub max_redraws: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            d1: 5000,
            train: 500,
            val: 2000,
            test: 2000,
            max_redraws: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<F> {
    pub train: TraceSet<F>,
    pub val: TraceSet<F>,
    pub test: TraceSet<F>,
    /// How many draws were discarded for missing classes.
    pub redraws: usize,
}

impl SplitSizes {
    pub fn check(&self, available: usize) -> Result<()> {
        if self.train == 0 || self.val == 0 || self.test == 0 {
            return Err(Error::Config("train, val and test sizes must be positive".into()));
        }
        if self.d1 >= available {
            return Err(Error::Config(format!(
                "D1 boundary {} leaves no attack pool in {available} traces",
                self.d1
            )));
        }
        if self.train + self.val > self.d1 {
            return Err(Error::Config(format!(
                "train {} + val {} exceed the {} profiling traces",
                self.train, self.val, self.d1
            )));
        }
        if self.test > available - self.d1 {
            return Err(Error::Config(format!(
                "test {} exceeds the {} attack-pool traces",
                self.test,
                available - self.d1
            )));
        }
        Ok(())
    }

    /// Draws the split for one repeat.
    pub fn draw<F: Scalar>(&self, pool: &TraceSet<F>, seed: u64) -> Result<Split<F>> {
        self.check(pool.len())?;
        let d1 = pool.slice(0..self.d1);
        let d2 = pool.slice(self.d1..pool.len());
        let test = sample_disjoint(&d2, &[self.test], derive_seed(seed, "split-test", 0))?
            .pop()
            .expect("one subset");
        let mut redraws = 0;
        loop {
            let mut tv = sample_disjoint(&d1, &[self.train, self.val], derive_seed(seed, "split-train", redraws as u64))?;
            let val = tv.pop().expect("two subsets");
            let train = tv.pop().expect("two subsets");
            match train.class_histogram().iter().position(|&c| c == 0) {
                None => {
                    return Ok(Split {
                        train,
                        val,
                        test,
                        redraws,
                    })
                }
                Some(class) if redraws >= self.max_redraws => return Err(Error::MissingClass { class }),
                Some(_) => redraws += 1,
            }
        }
    }
}
