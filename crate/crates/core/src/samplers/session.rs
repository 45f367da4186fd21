use crate::error::Result;
use crate::path::{PosteriorEval, PosteriorModel};
use crate::space::{State, StateSpace};

/// Per-trajectory view of a posterior model that counts evaluations and,
/// when caching is on, skips calls whose answer is already known:
///
/// - a time-independent model queried again at an unchanged state reuses
///   the previous rows;
/// - under a masked source a fully unmasked state has point-mass rows.
pub(crate) struct Session<'a> {
    model: &'a dyn PosteriorModel,
    space: StateSpace,
    cache: bool,
    time_independent: bool,
    last: Option<PosteriorEval>,
    nfe: u64,
}

impl<'a> Session<'a> {
    pub(crate) fn new(model: &'a dyn PosteriorModel, space: StateSpace, cache: bool) -> Self {
        Self {
            model,
            space,
            cache,
            time_independent: model.time_independent(),
            last: None,
            nfe: 0,
        }
    }

    pub(crate) fn nfe(&self) -> u64 {
        self.nfe
    }

    pub(crate) fn posterior(&mut self, t: f64, x: &State) -> Result<&PosteriorEval> {
        let reusable = self.cache
            && self.time_independent
            && self.last.as_ref().is_some_and(|last| &last.x == x);
        if !reusable {
            let eval = match self.space.mask_token() {
                Some(mask) if self.cache && !x.tokens().contains(&mask) => {
                    PosteriorEval::point_mass(t, x.clone(), self.space.vocab())
                }
                _ => {
                    self.nfe += 1;
                    self.model.evaluate(t, x)?
                }
            };
            self.last = Some(eval);
        }
        Ok(self.last.as_ref().expect("posterior stored above"))
    }
}
