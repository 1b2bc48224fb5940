//! Many-to-one deferred acceptance over dense indices.
//!
//! Proposers walk down their lists; every acceptor keeps the best `capacity`
//! proposals it has seen and rejects the rest. The outcome does not depend on
//! proposal order, which lets a finished state be resumed when new proposers
//! arrive.

/// Preference data for one deferred-acceptance run.
#[derive(Debug, Clone, Copy)]
pub struct DaInput<'a> {
    /// Acceptors each proposer will propose to, best first.
    pub proposer_prefs: &'a [Vec<usize>],
    /// `[acceptor][proposer]` rank, lower is better; `None` is unacceptable.
    pub acceptor_rank: &'a [Vec<Option<usize>>],
    pub capacity: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaState {
    next: Vec<usize>,
    holds: Vec<Vec<usize>>,
    held_by: Vec<Option<usize>>,
    proposals: usize,
}

impl DaState {
    pub fn new(proposers: usize, acceptors: usize) -> Self {
        DaState {
            next: vec![0; proposers],
            holds: vec![Vec::new(); acceptors],
            held_by: vec![None; proposers],
            proposals: 0,
        }
    }

    /// Resumes from a finished run's outcome after new proposers arrived.
    /// Held proposers continue below their current acceptor; everyone else
    /// proposes from the top. A proposer rejected before is rejected again,
    /// since arrivals only make acceptors pickier.
    pub fn resume(input: &DaInput<'_>, held_by: &[Option<usize>]) -> Self {
        let mut state = DaState::new(input.proposer_prefs.len(), input.capacity.len());
        for (p, held) in held_by.iter().enumerate() {
            let prefs = &input.proposer_prefs[p];
            state.next[p] = match held {
                None => 0,
                Some(a) => match prefs.iter().position(|x| x == a) {
                    Some(pos) => {
                        state.held_by[p] = Some(*a);
                        state.holds[*a].push(p);
                        pos + 1
                    }
                    None => prefs.len(),
                },
            };
        }
        state
    }

    fn can_propose(&self, input: &DaInput<'_>, p: usize) -> bool {
        self.held_by[p].is_none() && self.next[p] < input.proposer_prefs[p].len()
    }

    pub fn is_done(&self, input: &DaInput<'_>) -> bool {
        (0..self.next.len()).all(|p| !self.can_propose(input, p))
    }

    /// One synchronous round: every free proposer with options left proposes
    /// to its next choice. Returns false when nobody could propose.
    pub fn round(&mut self, input: &DaInput<'_>) -> bool {
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); self.holds.len()];
        let mut any = false;
        for p in 0..self.next.len() {
            if self.can_propose(input, p) {
                let a = input.proposer_prefs[p][self.next[p]];
                self.next[p] += 1;
                self.proposals += 1;
                incoming[a].push(p);
                any = true;
            }
        }
        for (a, new) in incoming.into_iter().enumerate() {
            if new.is_empty() {
                continue;
            }
            let rank = &input.acceptor_rank[a];
            let mut pool: Vec<usize> = self.holds[a].iter().copied().chain(new).filter(|&p| rank[p].is_some()).collect();
            pool.sort_by_key(|&p| rank[p]);
            pool.truncate(input.capacity[a]);
            for &p in &self.holds[a] {
                self.held_by[p] = None;
            }
            for &p in &pool {
                self.held_by[p] = Some(a);
            }
            self.holds[a] = pool;
        }
        any
    }

    /// Runs rounds until nobody can propose; returns the number of rounds.
    pub fn run(&mut self, input: &DaInput<'_>) -> usize {
        let mut rounds = 0;
        while self.round(input) {
            rounds += 1;
        }
        rounds
    }

    pub fn held_by(&self) -> &[Option<usize>] {
        &self.held_by
    }

    /// Proposers held by `acceptor`, in the acceptor's preference order.
    pub fn holds(&self, acceptor: usize) -> &[usize] {
        &self.holds[acceptor]
    }

    pub fn proposals(&self) -> usize {
        self.proposals
    }
}

/// Proposer-optimal stable assignment and the number of rounds it took.
pub fn deferred_acceptance(input: &DaInput<'_>) -> (Vec<Option<usize>>, usize) {
    let mut state = DaState::new(input.proposer_prefs.len(), input.capacity.len());
    let rounds = state.run(input);
    (state.held_by, rounds)
}
