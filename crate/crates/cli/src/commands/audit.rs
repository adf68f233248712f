use vte_core::corpus::{load_split, SplitName};
use vte_core::explainer::read_generated;
use vte_core::train::{aggregate_audit, read_audit_sheet, relevance_audit, write_audit_sheet};

use super::{create_parent, write_json};
use crate::args::AuditArgs;
use crate::error::{CliError, CliResult};

pub fn audit(a: AuditArgs) -> CliResult<()> {
    if let Some(scored) = &a.scored {
        let summary = aggregate_audit(&read_audit_sheet(scored)?)?;
        println!("scored rows            {}", summary.n_scored);
        println!("mean relevance         {:.4}", summary.mean_score);
        println!("fully relevant         {:.2}%", 100.0 * summary.fully_relevant_fraction);
        if let Some(path) = &a.json {
            create_parent(path)?;
            write_json(path, &summary)?;
        }
        return Ok(());
    }
    let (Some(generated), Some(gold), Some(out)) = (&a.generated, &a.gold, &a.out) else {
        return Err(CliError::Usage("sampling needs --generated, --gold and --out".into()));
    };
    let generated = read_generated(generated)?;
    let gold = load_split(gold, SplitName::Test)?;
    let sample = relevance_audit(&generated, &gold, a.sample_size, a.seed)?;
    if let Some(w) = &sample.warning {
        log::warn!("{w}");
    }
    create_parent(out)?;
    write_audit_sheet(out, &sample.rows)?;
    println!("wrote {} rows to {}", sample.rows.len(), out.display());
    Ok(())
}
