use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::record::stable_hash;
use super::{ContextId, FieldValue, MemorySource, Record, RecordIter, RecordSource, VectorIndex};
use crate::error::{Error, Result};
use crate::llm::Usage;

pub type ToolArgs = IndexMap<String, FieldValue>;

/// Result of a tool invocation as seen by the agent loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolOutput {
    pub text: String,
    /// Model spend incurred while running the tool.
    pub usage: Usage,
    pub derived_contexts: Vec<ContextId>,
    pub pipeline_ids: Vec<String>,
}

impl ToolOutput {
    pub fn text(text: impl Into<String>) -> Self {
        ToolOutput { text: text.into(), ..Default::default() }
    }
}

pub type ToolHandler = Arc<dyn Fn(&Context, &ToolArgs) -> std::result::Result<ToolOutput, String> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Text,
    Number,
    Boolean,
    List,
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamType::Text => "text",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::List => "list",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolParam {
    pub name: String,
    pub ty: ParamType,
    pub required: bool,
}

impl ToolParam {
    pub fn required(name: &str, ty: ParamType) -> Self {
        ToolParam { name: name.to_string(), ty, required: true }
    }

    pub fn optional(name: &str, ty: ParamType) -> Self {
        ToolParam { name: name.to_string(), ty, required: false }
    }
}

/// A tool exposed to agents operating on a context.
#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ToolParam>,
    pub handler: ToolHandler,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        params: Vec<ToolParam>,
        handler: ToolHandler,
    ) -> Self {
        ToolSpec { name: name.into(), description: description.into(), params, handler }
    }

    /// One catalog line: `name(a: text, b?: number) - description`.
    pub fn signature(&self) -> String {
        let params = self
            .params
            .iter()
            .map(|p| format!("{}{}: {}", p.name, if p.required { "" } else { "?" }, p.ty))
            .collect::<Vec<_>>()
            .join(", ");
        format!("{}({}) - {}", self.name, params, self.description)
    }
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec").field("name", &self.name).field("params", &self.params).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Compute,
    Search,
    Pipeline,
    Reuse,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::Compute => "compute",
            OperatorKind::Search => "search",
            OperatorKind::Pipeline => "pipeline",
            OperatorKind::Reuse => "reuse",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ContextLineage {
    pub parent: Arc<Context>,
    pub instruction: String,
    pub operator: OperatorKind,
}

/// A described view over records with optional index and custom tools.
///
/// Contexts are immutable; enrichment produces a new context whose lineage
/// points at its parent.
#[derive(Debug, Clone)]
pub struct Context {
    id: ContextId,
    name: String,
    description: String,
    source: Arc<dyn RecordSource>,
    index: Option<Arc<VectorIndex>>,
    tools: Arc<Vec<ToolSpec>>,
    lineage: Option<ContextLineage>,
}

pub const DEFAULT_CONTEXT_NAME: &str = "ctx";

impl Context {
    pub fn create(
        source: Arc<dyn RecordSource>,
        description: impl Into<String>,
        index: Option<Arc<VectorIndex>>,
        tools: Vec<ToolSpec>,
    ) -> Result<Self> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(Error::Validation("context description is empty".into()));
        }
        let mut names = HashSet::new();
        for t in &tools {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate tool name `{}`", t.name)));
            }
        }
        let id = ContextId::new(stable_hash(&["source", &description, &source.origin(), &source.len().to_string()]));
        Ok(Context {
            id,
            name: DEFAULT_CONTEXT_NAME.to_string(),
            description,
            source,
            index,
            tools: Arc::new(tools),
            lineage: None,
        })
    }

    /// Convenience constructor over an in-memory record list.
    pub fn from_records(origin: &str, records: Vec<Record>, description: impl Into<String>) -> Result<Self> {
        let source = MemorySource::new(origin, records)?;
        Context::create(Arc::new(source), description, None, Vec::new())
    }

    /// Child context. Without `records` the child shares the parent's
    /// source. Tools, index and name are inherited.
    pub fn derive(
        parent: &Arc<Context>,
        instruction: impl Into<String>,
        new_description: impl Into<String>,
        operator: OperatorKind,
        records: Option<Vec<Record>>,
    ) -> Result<Self> {
        let instruction = instruction.into();
        let description = new_description.into();
        if description.trim().is_empty() {
            return Err(Error::Validation("context description is empty".into()));
        }
        let (source, record_key): (Arc<dyn RecordSource>, String) = match records {
            Some(records) => {
                let key = stable_hash(&records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
                let origin = format!("{}/{}", parent.id, operator);
                (Arc::new(MemorySource::new(origin, records)?), key)
            }
            None => (parent.source.clone(), "shared".to_string()),
        };
        let id = ContextId::new(stable_hash(&[
            parent.id.as_str(),
            &operator.to_string(),
            &instruction,
            &description,
            &record_key,
        ]));
        Ok(Context {
            id,
            name: parent.name.clone(),
            description,
            source,
            index: parent.index.clone(),
            tools: parent.tools.clone(),
            lineage: Some(ContextLineage { parent: parent.clone(), instruction, operator }),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Overrides the generated id (used when reloading persisted contexts).
    pub fn with_id(mut self, id: ContextId) -> Self {
        self.id = id;
        self
    }

    pub fn with_index(mut self, index: Arc<VectorIndex>) -> Self {
        self.index = Some(index);
        self
    }

    pub fn id(&self) -> &ContextId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn source(&self) -> &Arc<dyn RecordSource> {
        &self.source
    }

    pub fn index(&self) -> Option<&Arc<VectorIndex>> {
        self.index.as_ref()
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn lineage(&self) -> Option<&ContextLineage> {
        self.lineage.as_ref()
    }

    pub fn parent_id(&self) -> Option<&ContextId> {
        self.lineage.as_ref().map(|l| &l.parent.id)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn iter(&self) -> RecordIter<'_> {
        self.source.iter()
    }

    /// Materializes all records; fails on the first data-access error.
    pub fn records(&self) -> Result<Vec<Record>> {
        self.iter().collect()
    }

    /// Whether `reference` names this context in a pipeline `scan(...)`.
    pub fn answers_to(&self, reference: &str) -> bool {
        reference == self.name || reference == DEFAULT_CONTEXT_NAME || reference == self.id.as_str()
    }

    fn require_index(&self) -> Result<&Arc<VectorIndex>> {
        self.index.as_ref().ok_or_else(|| Error::Capability { context: self.id.to_string(), capability: "index" })
    }

    pub fn lookup(&self, key: &str) -> Result<Option<Record>> {
        Ok(self.require_index()?.lookup(key).cloned())
    }

    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<(Record, f64)>> {
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        self.require_index()?.top_k(query, k)
    }

    /// Parents from nearest to the root source context.
    pub fn ancestors(&self) -> impl Iterator<Item = &Context> {
        std::iter::successors(self.lineage.as_ref().map(|l| l.parent.as_ref()), |c| {
            c.lineage.as_ref().map(|l| l.parent.as_ref())
        })
    }

    /// One-line lineage summary, e.g. `search("...") <- ctx 1a2b`.
    pub fn lineage_summary(&self) -> String {
        match &self.lineage {
            None => "source".to_string(),
            Some(l) => {
                format!("{}({:?}) <- {}", l.operator, super::record::truncate_chars(&l.instruction, 120), l.parent.id)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::HashingEmbedder;

    fn emails(n: usize) -> Vec<Record> {
        (0..n)
            .map(|i| {
                Record::new(
                    format!("e{i:03}"),
                    vec![("body".to_string(), FieldValue::text(format!("email number {i}")))],
                )
                .unwrap()
            })
            .collect()
    }

    fn noop_tool(name: &str) -> ToolSpec {
        ToolSpec::new(name, "noop", vec![], Arc::new(|_, _| Ok(ToolOutput::text("ok"))))
    }

    #[test]
    fn create_from_synthetic_emails() {
        let ctx = Context::from_records("mem", emails(100), "Subset of 100 corporate emails").unwrap();
        assert!(ctx.lineage().is_none());
        assert_eq!(ctx.iter().count(), 100);
    }

    #[test]
    fn empty_collection_is_valid() {
        let ctx = Context::from_records("mem", vec![], "Empty set").unwrap();
        assert_eq!(ctx.iter().count(), 0);
    }

    #[test]
    fn duplicate_tools_are_config_errors() {
        let src = Arc::new(MemorySource::new("m", emails(2)).unwrap());
        let err = Context::create(src, "d", None, vec![noop_tool("read"), noop_tool("read")]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn empty_description_is_validation_error() {
        let err = Context::from_records("m", vec![], "  ").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn derive_sets_lineage_and_inherits() {
        let src = Arc::new(MemorySource::new("m", emails(20)).unwrap());
        let parent = Arc::new(Context::create(src, "Parent data", None, vec![noop_tool("read")]).unwrap());
        let child = Context::derive(
            &parent,
            "find identity theft stats",
            "Parent data; FOUND: file X has 2001-2024 counts",
            OperatorKind::Search,
            None,
        )
        .unwrap();
        assert_eq!(child.parent_id(), Some(parent.id()));
        assert_eq!(child.tools().len(), 1);
        assert_eq!(child.len(), 20);

        let filtered =
            Context::derive(&parent, "filter", "12 emails", OperatorKind::Pipeline, Some(emails(12))).unwrap();
        assert_eq!(filtered.iter().count(), 12);
    }

    #[test]
    fn lineage_chain_reaches_root() {
        let mut ctx = Arc::new(Context::from_records("m", emails(3), "root").unwrap());
        let root = ctx.id().clone();
        for i in 0..3 {
            ctx = Arc::new(
                Context::derive(&ctx, format!("step {i}"), format!("d{i}"), OperatorKind::Search, None).unwrap(),
            );
        }
        let hops: Vec<_> = ctx.ancestors().map(|c| c.id().clone()).collect();
        assert_eq!(hops.len(), 3);
        assert_eq!(hops.last(), Some(&root));
    }

    #[test]
    fn lookup_and_topk_need_index() {
        let ctx = Context::from_records("m", emails(3), "d").unwrap();
        assert!(matches!(ctx.lookup("e000"), Err(Error::Capability { .. })));
        assert!(matches!(ctx.top_k("x", 1), Err(Error::Capability { .. })));
    }

    #[test]
    fn lookup_and_topk_with_index() {
        let src = Arc::new(MemorySource::new("m", emails(10)).unwrap());
        let index = VectorIndex::build(src.as_ref(), Arc::new(HashingEmbedder::default()), None).unwrap();
        let ctx = Context::create(src, "d", Some(Arc::new(index)), vec![]).unwrap();
        assert_eq!(ctx.lookup("e004").unwrap().unwrap().id.as_str(), "e004");
        assert!(ctx.lookup("nonexistent").unwrap().is_none());

        let hits = ctx.top_k("body: email number 7\n", 1).unwrap();
        assert_eq!(hits[0].0.id.as_str(), "e007");
        assert!((hits[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(ctx.top_k("email", 50).unwrap().len(), 10);
    }
}
