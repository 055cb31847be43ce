use rumoverload::{aggregate, paper_data, read_aggregate, read_panel, AggregateDataset, PanelDataset};

use crate::CliError;

pub enum Input {
    Aggregate(AggregateDataset),
    Panel(PanelDataset),
}

impl Input {
    /// `paper`, or a CSV whose header decides between panel and aggregate.
    pub fn load(spec: &str) -> Result<Self, CliError> {
        if spec == "paper" {
            return Ok(Input::Aggregate(paper_data::dataset()));
        }
        let text = std::fs::read_to_string(spec).map_err(|e| CliError::Usage(format!("cannot read {spec}: {e}")))?;
        let header = text.lines().next().unwrap_or("").trim_start_matches('\u{feff}');
        if header.trim_start().starts_with("subject_id") {
            Ok(Input::Panel(read_panel(text.as_bytes(), None)?))
        } else {
            Ok(Input::Aggregate(read_aggregate(text.as_bytes(), None)?))
        }
    }

    pub fn aggregate(&self) -> Result<AggregateDataset, CliError> {
        match self {
            Input::Aggregate(a) => Ok(a.clone()),
            Input::Panel(p) => Ok(aggregate(p)?),
        }
    }

    pub fn panel(&self, command: &str) -> Result<&PanelDataset, CliError> {
        match self {
            Input::Panel(p) => Ok(p),
            Input::Aggregate(_) => Err(CliError::Usage(format!(
                "{command} needs subject-level panel data (subject_id,choice_set,chose_default); \
                 aggregate counts do not determine within-subject dependence. An approximating panel \
                 can be drawn with `rumoverload simulate --input <aggregate> --marginal-match --seed <s>`"
            ))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Input::Aggregate(_) => "aggregate",
            Input::Panel(_) => "panel",
        }
    }
}
