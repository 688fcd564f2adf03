//! Applying app changelogs to an existing context space.

use std::collections::{BTreeMap, BTreeSet};

use ctxguard_core::dsl::parse_constraint;
use ctxguard_core::model::{lint_space, ClassEntry, ContextSpace, FunctionEntry, Severity};

use crate::generate::{generate_all, merge_contexts, GenConfig};
use crate::inputs::ChangeLog;
use crate::provider::ReasoningProvider;
use crate::ToolchainError;

/// Every context a function mentions, including constraint right-hand sides.
pub fn function_context_refs(f: &FunctionEntry) -> BTreeSet<String> {
    let mut refs: BTreeSet<String> = f.direct_context_refs().into_iter().map(str::to_owned).collect();
    for rule in f.policies.values().flat_map(|p| &p.rules) {
        if let Ok(ast) = parse_constraint(&rule.constraint) {
            refs.extend(ast.context_refs().into_iter().map(str::to_owned));
        }
    }
    refs
}

/// `7` becomes `8`, `1.4` becomes `1.5`, anything else gains a `.1` suffix.
pub fn bump_version(version: &str) -> String {
    let (head, last) = match version.rsplit_once('.') {
        Some((h, l)) => (Some(h), l),
        None => (None, version),
    };
    match last.parse::<u64>() {
        Ok(n) => match head {
            Some(h) => format!("{h}.{}", n + 1),
            None => (n + 1).to_string(),
        },
        Err(_) => format!("{version}.1"),
    }
}

fn remove_function(space: &mut ContextSpace, id: &str) -> Option<FunctionEntry> {
    for list in space.classes.iter_mut().flatten().map(|c| &mut c.functions).chain(space.functions.as_mut()) {
        if let Some(i) = list.iter().position(|f| f.function_id == id) {
            return Some(list.remove(i));
        }
    }
    None
}

fn insert_function(space: &mut ContextSpace, class_id: Option<&str>, entry: FunctionEntry) {
    let list = match (&mut space.classes, class_id) {
        (Some(classes), wanted) => {
            let wanted = wanted.unwrap_or("default");
            let pos = match classes.iter().position(|c| c.class_id == wanted) {
                Some(p) => p,
                None => {
                    classes.push(ClassEntry { class_id: wanted.to_owned(), functions: Vec::new() });
                    classes.len() - 1
                }
            };
            &mut classes[pos].functions
        }
        (None, _) => space.functions.get_or_insert_with(Vec::new),
    };
    list.push(entry);
}

/// Removes, regenerates and adds functions per `changelog`.
///
/// Contexts referenced only by removed or replaced entries are dropped;
/// everything else is left byte-identical. The version is bumped and the
/// result must lint clean.
pub fn evolve_from_changelog(
    space: &ContextSpace,
    changelog: &ChangeLog,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
) -> Result<ContextSpace, ToolchainError> {
    changelog.check_disjoint()?;
    let errors: Vec<String> =
        lint_space(space).into_iter().filter(|f| f.severity == Severity::Error).map(|f| f.to_string()).collect();
    if !errors.is_empty() {
        return Err(ToolchainError::Precondition(format!("input space does not lint clean: {}", errors.join("; "))));
    }
    for id in changelog.removed.iter().chain(changelog.modified.iter().map(|d| &d.name)) {
        if space.function(id).is_none() {
            return Err(ToolchainError::UnknownFunction(id.clone()));
        }
    }
    if let Some(d) = changelog.added.iter().find(|d| space.function(&d.name).is_some()) {
        return Err(ToolchainError::DuplicateFunction(d.name.clone()));
    }

    let mut out = space.clone();
    let mut touched = BTreeSet::new();
    for id in &changelog.removed {
        let old = remove_function(&mut out, id).expect("checked above");
        touched.extend(function_context_refs(&old));
    }
    let modified: BTreeSet<&str> = changelog.modified.iter().map(|d| d.name.as_str()).collect();
    let mut still_used = BTreeSet::new();
    for (_, f) in out.iter_functions() {
        if modified.contains(f.function_id.as_str()) {
            touched.extend(function_context_refs(f));
        } else {
            still_used.extend(function_context_refs(f));
        }
    }
    out.contexts.retain(|id, _| !touched.contains(id) || still_used.contains(id));

    let jobs: Vec<_> = changelog
        .modified
        .iter()
        .map(|d| (d.clone(), out.function(&d.name).and_then(|f| f.gui_binding.clone())))
        .chain(changelog.added.iter().map(|d| (d.clone(), None)))
        .collect();
    let mut problems = Vec::new();
    for ((doc, _), result) in jobs.iter().zip(generate_all(&jobs, provider, cfg, &BTreeMap::new())) {
        let (entry, declared) = result?;
        problems.extend(merge_contexts(&mut out, &declared, &entry.function_id));
        if out.function(&doc.name).is_some() {
            let slot = out.functions_mut().find(|f| f.function_id == doc.name).expect("present");
            *slot = entry;
        } else {
            insert_function(&mut out, doc.class_id.as_deref(), entry);
        }
    }
    out.version = bump_version(&space.version);

    problems.extend(lint_space(&out).into_iter().filter(|f| f.severity == Severity::Error).map(|f| f.to_string()));
    if !problems.is_empty() {
        return Err(ToolchainError::Lint { passes: 0, problems });
    }
    Ok(out)
}
