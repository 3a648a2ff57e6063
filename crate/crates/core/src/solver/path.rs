use super::fista::{finalize, GramProblem, PreparedProblem};
use super::{AdaptiveWeights, PenaltyGrid, SolverConfig, SpecsSolution};
use crate::design::CecmDesign;
use crate::error::{Result, SpecsError};

/// Solutions for every grid pair in path order (outer λ_G, inner λ_I
/// descending). Each point is warm-started from its predecessor in λ_I; the
/// first point of a λ_G row starts from the first point of the previous row.
pub fn specs_path(
    design: &CecmDesign,
    weights: &AdaptiveWeights,
    grid: &PenaltyGrid,
    config: &SolverConfig,
) -> Result<Vec<SpecsSolution>> {
    if grid.is_empty() {
        return Err(SpecsError::InvalidInput("empty penalty grid".into()));
    }
    let problem = GramProblem::from_design(design);
    let prepared = PreparedProblem::new(&problem, weights, config)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut row_start: Option<Vec<f64>> = None;
    for &lg in &grid.lambda_g {
        let mut warm = row_start.clone();
        for (k, &li) in grid.lambda_i.iter().enumerate() {
            let raw = prepared
                .solve(li, lg, warm.as_deref())
                .and_then(|raw| finalize(design, weights, li, lg, raw, config))
                .map_err(|e| SpecsError::AtGridPoint { lambda_i: li, lambda_g: lg, source: Box::new(e) })?;
            if k == 0 {
                row_start = Some(raw.gamma.clone());
            }
            warm = Some(raw.gamma.clone());
            out.push(raw);
        }
    }
    Ok(out)
}
