use super::barrier::{is_feasible, solve_with, SolverOptions};
use super::{KktSolution, ProblemJ, SolveStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvictionOutcome {
    pub problem: ProblemJ,
    pub solution: KktSolution,
    /// Original ids of evicted UEs, in eviction order.
    pub evicted: Vec<usize>,
}

/// Drops the lowest-norm UE from an infeasible problem.
pub fn evict_weakest(p: &ProblemJ) -> Result<(ProblemJ, usize)> {
    if is_feasible(p) {
        return Err(Error::Precondition("problem is feasible; nothing to evict".into()));
    }
    if p.m_users() == 1 {
        return Err(Error::TerminalInfeasibility(format!(
            "UE {} alone cannot meet its rate requirement",
            p.ue_ids[0]
        )));
    }
    let m = p.m_users();
    let gamma = p.gamma.rows(1, m - 1).into_owned();
    let reduced = ProblemJ::new(gamma, p.min_rates[1..].to_vec(), p.sic_sensitivity, p.ue_ids[1..].to_vec())?;
    Ok((reduced, p.ue_ids[0]))
}

/// Solves, evicting the weakest UE after every infeasible verdict. Stops
/// with an infeasible single-UE problem if even that cannot be served.
pub fn solve_with_eviction(p: &ProblemJ, opts: &SolverOptions) -> Result<EvictionOutcome> {
    let mut problem = p.clone();
    let mut evicted = Vec::new();
    loop {
        let solution = solve_with(&problem, opts)?;
        if solution.status != SolveStatus::Infeasible || problem.m_users() == 1 {
            return Ok(EvictionOutcome {
                problem,
                solution,
                evicted,
            });
        }
        let (next, id) = evict_weakest(&problem)?;
        evicted.push(id);
        problem = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn feasible_problem_is_not_evicted() {
        let p = ProblemJ::new(DMatrix::from_column_slice(2, 1, &[1.0, 4.0]), vec![0.0; 2], 0.0, vec![0, 1]).unwrap();
        assert!(matches!(evict_weakest(&p), Err(Error::Precondition(_))));
    }

    #[test]
    fn tight_budget_drops_the_weakest() {
        let gamma = DMatrix::from_column_slice(3, 1, &[0.5, 20.0, 40.0]);
        let p = ProblemJ::new(gamma, vec![1.0; 3], 0.0, vec![4, 7, 9]).unwrap();
        let (q, gone) = evict_weakest(&p).unwrap();
        assert_eq!(gone, 4);
        assert_eq!(q.ue_ids, vec![7, 9]);
        assert_eq!(q.m_users(), 2);
    }

    #[test]
    fn lone_infeasible_ue_is_terminal() {
        let p = ProblemJ::new(DMatrix::from_element(1, 1, 0.1), vec![5.0], 0.0, vec![0]).unwrap();
        assert!(matches!(evict_weakest(&p), Err(Error::TerminalInfeasibility(_))));
        let out = solve_with_eviction(&p, &SolverOptions::default()).unwrap();
        assert_eq!(out.solution.status, SolveStatus::Infeasible);
    }
}
