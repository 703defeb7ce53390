#![allow(dead_code)]

use proofloop_core::{PipelineConfig, RenderedPrompt, TemplateName};
use proofloop_gateway::{CompletionRequest, StepKind};

pub fn prompt(text: &str) -> RenderedPrompt {
    RenderedPrompt {
        template: TemplateName::Verifier,
        text: text.into(),
        slots_filled: Default::default(),
        warnings: vec![],
    }
}

pub fn request(run: &str, step: StepKind, ordinal: u32) -> CompletionRequest {
    CompletionRequest::new(prompt("check this proof"), &PipelineConfig::default(), run, step, ordinal)
}
