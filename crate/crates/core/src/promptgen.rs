//! Instruction-tuning corpora and the constrained-decoding trie.
//!
//! Five task families are rendered from editable templates with `{user}`,
//! `{history}`, `{item}`, `{target}`, `{rating}`, `{review}` and `{feature}`
//! placeholders. Identifier tokens are joined with single spaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::graph::Node;
use crate::idgen::IdAssignment;
use crate::ingest::{DatasetIndex, DatasetSplits};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0} has no identifier")]
    UnknownEntity(Node),
    #[error("template for {task} needs `{{{field}}}` but none was given")]
    MissingField { task: Task, field: &'static str },
    #[error("template line {line}: {reason}")]
    Template { line: usize, reason: String },
    #[error("item id `{0}` appears twice")]
    DuplicateId(String),
    #[error("malformed trie: {0}")]
    Trie(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sequential,
    Direct,
    Rating,
    Explanation,
    Review,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Sequential, Task::Direct, Task::Rating, Task::Explanation, Task::Review];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sequential => "sequential",
            Task::Direct => "direct",
            Task::Rating => "rating",
            Task::Explanation => "explanation",
            Task::Review => "review",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

const PLACEHOLDERS: [&str; 7] = ["user", "history", "item", "target", "rating", "review", "feature"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub input: String,
    pub output: String,
}

/// Templates per task; every template of a task is rendered for each example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Templates {
    by_task: BTreeMap<Task, Vec<Template>>,
}

impl Default for Templates {
    fn default() -> Self {
        let rows = [
            (
                Task::Sequential,
                "Considering {user} has interacted with items {history}. What is the next recommendation for the user?",
            ),
            (Task::Direct, "What should we recommend for {user}?"),
            (
                Task::Rating,
                "Which star rating will {user} give to item {item}? (1 being the lowest and 5 being the highest).",
            ),
            (
                Task::Explanation,
                "According to the feature word {feature}, generate a {rating}-star explanation for {user} about {item}.",
            ),
            (
                Task::Review,
                "Write a short sentence to summarize the following product review from {user}: {review}",
            ),
        ];
        let by_task = rows
            .into_iter()
            .map(|(task, input)| {
                (
                    task,
                    vec![Template {
                        input: input.to_string(),
                        output: "{target}".to_string(),
                    }],
                )
            })
            .collect();
        Templates { by_task }
    }
}

impl Templates {
    pub fn get(&self, task: Task) -> &[Template] {
        self.by_task.get(&task).map_or(&[], Vec::as_slice)
    }

    /// Reads `task<TAB>input<TAB>output` lines; blank lines and `#` comments
    /// are skipped. Tasks named in the file replace their defaults.
    pub fn load<R: BufRead>(source: R) -> Result<Self, PromptError> {
        let mut loaded: BTreeMap<Task, Vec<Template>> = BTreeMap::new();
        for (k, line) in source.lines().enumerate() {
            let line = line?;
            let bad = |reason: String| PromptError::Template { line: k + 1, reason };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let task: Task = fields[0].parse().map_err(bad)?;
            for text in &fields[1..] {
                check_placeholders(text).map_err(bad)?;
            }
            loaded.entry(task).or_default().push(Template {
                input: fields[1].to_string(),
                output: fields[2].to_string(),
            });
        }
        let mut out = Templates::default();
        out.by_task.extend(loaded);
        Ok(out)
    }
}

fn check_placeholders(text: &str) -> Result<(), String> {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| format!("unclosed placeholder in `{text}`"))?;
        let name = &rest[open + 1..open + close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder `{{{name}}}`"));
        }
        rest = &rest[open + close + 1..];
    }
    Ok(())
}

/// What the example asks the model to produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Item(u32),
    Rating(u8),
    Text(String),
}

/// Everything a template may reference. Fields a task does not use stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PromptContext {
    pub user: u32,
    pub item: Option<u32>,
    pub history: Vec<u32>,
    pub rating: Option<u8>,
    pub review: Option<String>,
    pub feature: Option<String>,
    pub target: Option<Target>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub task: Task,
    pub input: String,
    pub output: String,
    pub user: u32,
    /// Items referenced by the example: history, then the item or target.
    pub items: Vec<u32>,
}

fn surface(assignment: &IdAssignment, node: Node) -> Result<String, PromptError> {
    assignment.surface(node).ok_or(PromptError::UnknownEntity(node))
}

fn fill(task: Task, text: &str, values: &BTreeMap<&'static str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len() + 64);
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let Some(close) = rest[open..].find('}') else {
            out.push_str(&rest[open..]);
            return Ok(out);
        };
        let name = &rest[open + 1..open + close];
        match PLACEHOLDERS.iter().find(|&&p| p == name) {
            Some(&field) => {
                let value = values.get(field).ok_or(PromptError::MissingField { task, field })?;
                out.push_str(value);
            }
            None => out.push_str(&rest[open..=open + close]),
        }
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_example(
    task: Task,
    template: &Template,
    assignment: &IdAssignment,
    ctx: &PromptContext,
) -> Result<PromptExample, PromptError> {
    let mut values: BTreeMap<&'static str, String> = BTreeMap::new();
    values.insert("user", surface(assignment, Node::User(ctx.user))?);
    let mut items = ctx.history.clone();
    if !ctx.history.is_empty() {
        let parts = ctx
            .history
            .iter()
            .map(|&i| surface(assignment, Node::Item(i)))
            .collect::<Result<Vec<_>, _>>()?;
        values.insert("history", parts.join(", "));
    }
    if let Some(i) = ctx.item {
        values.insert("item", surface(assignment, Node::Item(i))?);
        items.push(i);
    }
    if let Some(r) = ctx.rating {
        values.insert("rating", r.to_string());
    }
    if let Some(r) = &ctx.review {
        values.insert("review", r.clone());
    }
    if let Some(f) = &ctx.feature {
        values.insert("feature", f.clone());
    }
    match &ctx.target {
        Some(Target::Item(i)) => {
            values.insert("target", surface(assignment, Node::Item(*i))?);
            if ctx.item != Some(*i) {
                items.push(*i);
            }
        }
        Some(Target::Rating(r)) => {
            values.insert("target", r.to_string());
        }
        Some(Target::Text(t)) => {
            values.insert("target", t.clone());
        }
        None => {}
    }
    Ok(PromptExample {
        task,
        input: fill(task, &template.input, &values)?,
        output: fill(task, &template.output, &values)?,
        user: ctx.user,
        items,
    })
}

#[derive(Serialize)]
struct CorpusLine<'a> {
    task: Task,
    input: &'a str,
    output: &'a str,
    split: &'a str,
}

/// Lines written per task.
pub type TaskCounts = BTreeMap<Task, usize>;

/// Streams JSON lines `{task, input, output, split}` for the requested tasks,
/// ordered by task, then user index, then position in the user's sequence.
///
/// Sequential examples target every retained interaction after the first,
/// with all earlier retained items as history. Explanation and review
/// examples need the matching text fields and are skipped without them.
pub fn emit_corpus<W: Write>(
    index: &DatasetIndex,
    splits: &DatasetSplits,
    assignment: &IdAssignment,
    templates: &Templates,
    tasks: &BTreeSet<Task>,
    mut sink: W,
) -> Result<TaskCounts, PromptError> {
    let membership = splits.membership(index.interactions.len());
    let mut counts = TaskCounts::new();
    for &task in tasks {
        let count = counts.entry(task).or_insert(0);
        for (user, seq) in index.per_user_sequence.iter().enumerate() {
            let retained: Vec<usize> = seq.iter().copied().filter(|&id| membership[id].is_some()).collect();
            for (pos, &id) in retained.iter().enumerate() {
                let it = &index.interactions[id];
                let text = &index.texts[id];
                let base = PromptContext {
                    user: user as u32,
                    ..Default::default()
                };
                let ctx = match task {
                    Task::Sequential if pos == 0 => continue,
                    Task::Sequential => PromptContext {
                        history: retained[..pos].iter().map(|&h| index.interactions[h].item).collect(),
                        target: Some(Target::Item(it.item)),
                        ..base
                    },
                    Task::Direct => PromptContext {
                        target: Some(Target::Item(it.item)),
                        ..base
                    },
                    Task::Rating => PromptContext {
                        item: Some(it.item),
                        target: Some(Target::Rating(it.rating)),
                        ..base
                    },
                    Task::Explanation => match (&text.explanation, &text.feature) {
                        (Some(e), Some(f)) => PromptContext {
                            item: Some(it.item),
                            rating: Some(it.rating),
                            feature: Some(f.clone()),
                            target: Some(Target::Text(e.clone())),
                            ..base
                        },
                        _ => continue,
                    },
                    Task::Review => match (&text.review, &text.summary) {
                        (Some(r), Some(s)) => PromptContext {
                            item: Some(it.item),
                            review: Some(r.clone()),
                            target: Some(Target::Text(s.clone())),
                            ..base
                        },
                        _ => continue,
                    },
                };
                let split = membership[id].expect("retained").as_str();
                for template in templates.get(task) {
                    let ex = render_example(task, template, assignment, &ctx)?;
                    serde_json::to_writer(
                        &mut sink,
                        &CorpusLine {
                            task,
                            input: &ex.input,
                            output: &ex.output,
                            split,
                        },
                    )?;
                    sink.write_all(b"\n")?;
                    *count += 1;
                }
            }
        }
    }
    sink.flush()?;
    Ok(counts)
}

const ENTITY_KEY: &str = "$entity";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct TrieNode {
    children: BTreeMap<String, usize>,
    entity: Option<u32>,
}

/// Prefix tree of item identifier token sequences. A node may end one item's
/// id and continue into others, which numeric ids of different lengths need.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdTrie {
    nodes: Vec<TrieNode>,
}

impl IdTrie {
    fn empty() -> Self {
        IdTrie {
            nodes: vec![TrieNode::default()],
        }
    }

    fn insert(&mut self, tokens: &[String], entity: u32) -> Result<(), PromptError> {
        let mut at = 0;
        for t in tokens {
            if t == ENTITY_KEY {
                return Err(PromptError::Trie(format!("token `{ENTITY_KEY}` is reserved")));
            }
            at = match self.nodes[at].children.get(t) {
                Some(&c) => c,
                None => {
                    self.nodes.push(TrieNode::default());
                    let c = self.nodes.len() - 1;
                    self.nodes[at].children.insert(t.clone(), c);
                    c
                }
            };
        }
        if self.nodes[at].entity.replace(entity).is_some() {
            return Err(PromptError::DuplicateId(tokens.join(" ")));
        }
        Ok(())
    }

    fn walk<S: AsRef<str>>(&self, prefix: &[S]) -> Option<usize> {
        prefix
            .iter()
            .try_fold(0, |at, t| self.nodes[at].children.get(t.as_ref()).copied())
    }

    /// Tokens that extend `prefix` along some item id; empty for invalid prefixes.
    pub fn valid_continuations<S: AsRef<str>>(&self, prefix: &[S]) -> BTreeSet<String> {
        self.walk(prefix)
            .map(|at| self.nodes[at].children.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// The item whose complete id is `tokens`.
    pub fn entity<S: AsRef<str>>(&self, tokens: &[S]) -> Option<u32> {
        self.walk(tokens).and_then(|at| self.nodes[at].entity)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root-to-entity paths in lexicographic token order.
    pub fn paths(&self) -> Vec<(Vec<String>, u32)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::<String>::new())];
        while let Some((at, path)) = stack.pop() {
            let node = &self.nodes[at];
            if let Some(e) = node.entity {
                out.push((path.clone(), e));
            }
            for (t, &c) in node.children.iter().rev() {
                let mut next = path.clone();
                next.push(t.clone());
                stack.push((c, next));
            }
        }
        out
    }

    /// Nested `token → child` objects; a node ending an id carries
    /// `"$entity": <item index>`.
    pub fn to_json(&self) -> Value {
        fn node(trie: &IdTrie, at: usize) -> Value {
            let n = &trie.nodes[at];
            let mut map = Map::new();
            if let Some(e) = n.entity {
                map.insert(ENTITY_KEY.to_string(), Value::from(e));
            }
            for (t, &c) in &n.children {
                map.insert(t.clone(), node(trie, c));
            }
            Value::Object(map)
        }
        node(self, 0)
    }

    pub fn from_json(value: &Value) -> Result<Self, PromptError> {
        fn visit(trie: &mut IdTrie, value: &Value, path: &mut Vec<String>) -> Result<(), PromptError> {
            let map = value
                .as_object()
                .ok_or_else(|| PromptError::Trie(format!("node at `{}` is not an object", path.join(" "))))?;
            for (k, v) in map {
                if k == ENTITY_KEY {
                    let e = v
                        .as_u64()
                        .and_then(|e| u32::try_from(e).ok())
                        .ok_or_else(|| PromptError::Trie(format!("bad entity `{v}`")))?;
                    trie.insert(path, e)?;
                } else {
                    path.push(k.clone());
                    visit(trie, v, path)?;
                    path.pop();
                }
            }
            Ok(())
        }
        let mut trie = IdTrie::empty();
        visit(&mut trie, value, &mut Vec::new())?;
        Ok(trie)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), PromptError> {
        serde_json::to_writer(out, &self.to_json())?;
        Ok(())
    }
}

pub fn build_id_trie(assignment: &IdAssignment) -> Result<IdTrie, PromptError> {
    let mut trie = IdTrie::empty();
    for (i, seq) in assignment.item_ids().iter().enumerate() {
        trie.insert(seq, i as u32)?;
    }
    Ok(trie)
}
