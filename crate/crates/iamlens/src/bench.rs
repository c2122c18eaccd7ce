//! Scenario harness: instantiates the shipped fixtures with mechanical
//! ground truth, builds the per-scenario weight tree, and scores vision
//! reports as a weighted fraction of ground-truth facets reproduced
//! exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use iamlens_core::{evaluate, AccountSnapshot, Arn, Decision, PolicyDocument};

use crate::backend::FixtureBackend;
use crate::deepenum::ActionCatalog;
use crate::engine::{self, EnumerationMode, RunOptions};
use crate::fixture::{load_fixture_str, FixtureDocument, SCENARIO_FILES};
use crate::report::VisionReport;
use crate::session::Credential;

pub const SCENARIO_COUNT: usize = 22;
const WEIGHT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario {0}; valid ids are 1..=22")]
    UnknownScenario(usize),
    #[error("expected permission set is empty")]
    EmptyExpected,
    #[error("no scores to aggregate")]
    EmptyList,
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
}

// --- ground truth -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttachedTruth {
    pub arn: String,
    pub name: String,
    pub default_version_id: String,
    pub document: PolicyDocument,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EntityTruth {
    pub inline: BTreeMap<String, PolicyDocument>,
    pub attached: Vec<AttachedTruth>,
    /// Catalog actions each inline policy allows; simulation scenarios.
    pub sim_inline: BTreeMap<String, BTreeSet<String>>,
    /// Catalog actions each attached policy allows, keyed by policy ARN.
    pub sim_attached: BTreeMap<String, (String, BTreeSet<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserTruth {
    pub user_arn: String,
    pub groups: BTreeSet<String>,
    /// In-scope roles with assumption chains.
    pub roles: BTreeMap<String, Vec<String>>,
    pub user: EntityTruth,
    pub group_entities: BTreeMap<String, EntityTruth>,
    pub role_entities: BTreeMap<String, EntityTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub scenario_id: usize,
    pub account_id: String,
    pub targets: Vec<UserTruth>,
    /// S21 scores against simulation reconstruction instead of documents.
    pub simulation_scenario: bool,
    /// S22: the exact granted action set the fuzz sweep must discover.
    pub expected_permissions: Option<BTreeSet<String>>,
}

/// Reference reachability: breadth-first closure over fixture trust edges,
/// with chains listing every principal assumed on the way.
pub fn trust_closure(snapshot: &AccountSnapshot, user: &Arn) -> BTreeMap<String, Vec<String>> {
    let mut chains: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut frontier: Vec<(Arn, Vec<String>)> = vec![(user.clone(), Vec::new())];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (principal, chain) in &frontier {
            for role in snapshot.roles_admitting(principal) {
                let arn = role.arn.render();
                if chains.contains_key(&arn) {
                    continue;
                }
                let mut role_chain = chain.clone();
                role_chain.push(principal.render());
                chains.insert(arn.clone(), role_chain.clone());
                next.push((role.arn.clone(), role_chain));
            }
        }
        frontier = next;
    }
    chains
}

fn entity_truth(
    snapshot: &AccountSnapshot,
    inline: &BTreeMap<String, PolicyDocument>,
    attached: &[Arn],
    catalog: Option<&ActionCatalog>,
) -> EntityTruth {
    let mut truth = EntityTruth {
        inline: inline.clone(),
        ..Default::default()
    };
    for arn in attached {
        let policy = snapshot.policy(arn).expect("validated fixture attachment");
        truth.attached.push(AttachedTruth {
            arn: arn.render(),
            name: policy.name.clone(),
            default_version_id: policy.default_version_id.clone(),
            document: policy.default_document().clone(),
        });
    }
    if let Some(catalog) = catalog {
        for (name, doc) in inline {
            truth.sim_inline.insert(name.clone(), allowed_subset(doc, catalog));
        }
        for entry in &truth.attached {
            truth.sim_attached.insert(
                entry.arn.clone(),
                (entry.name.clone(), allowed_subset(&entry.document, catalog)),
            );
        }
    }
    truth
}

/// Catalog actions one document allows on its own: the simulation-visible
/// reconstruction of that document.
fn allowed_subset(doc: &PolicyDocument, catalog: &ActionCatalog) -> BTreeSet<String> {
    catalog
        .actions()
        .filter(|action| evaluate(&doc.statements, action, "*") == Decision::Allow)
        .map(str::to_string)
        .collect()
}

/// Every concrete action the user can perform, directly or via groups.
/// Wildcard grants are ignored; the scenario fixtures only use concrete
/// action names in user-reachable policies.
fn granted_actions(snapshot: &AccountSnapshot, user: &Arn) -> BTreeSet<String> {
    snapshot
        .effective_statements(user)
        .expect("fixture user resolves")
        .iter()
        .flat_map(|stmt| stmt.actions.iter().cloned())
        .filter(|a| !a.contains('*'))
        .collect()
}

pub fn ground_truth(
    scenario_id: usize,
    document: &FixtureDocument,
    catalog: Option<&ActionCatalog>,
) -> GroundTruth {
    let snapshot = &document.snapshot;
    let simulation_scenario = scenario_id == 21;
    let fuzz_scenario = scenario_id == 22;
    let sim_catalog = if simulation_scenario { catalog } else { None };
    let mut targets = Vec::new();
    for credential in &document.credentials {
        let user = snapshot.user_by_name(&credential.user).expect("credential user resolves");
        let user_arn = user.arn.clone();
        let groups: BTreeSet<String> = user
            .group_names
            .iter()
            .filter_map(|g| snapshot.group_by_name(g))
            .map(|g| g.arn.render())
            .collect();
        let roles = trust_closure(snapshot, &user_arn);
        let mut group_entities = BTreeMap::new();
        for group in snapshot.groups_of(&user.name) {
            group_entities.insert(
                group.arn.render(),
                entity_truth(snapshot, &group.inline_policies, &group.attached, sim_catalog),
            );
        }
        let mut role_entities = BTreeMap::new();
        for role_arn in roles.keys() {
            let role = snapshot
                .role_by_name(Arn::parse(role_arn).expect("closure arn parses").short_name())
                .expect("closure role resolves");
            role_entities.insert(
                role_arn.clone(),
                entity_truth(snapshot, &role.inline_policies, &role.attached, sim_catalog),
            );
        }
        targets.push(UserTruth {
            user_arn: user_arn.render(),
            groups,
            roles,
            user: entity_truth(snapshot, &user.inline_policies, &user.attached, sim_catalog),
            group_entities,
            role_entities,
        });
    }
    let expected_permissions = fuzz_scenario.then(|| {
        let user = snapshot
            .user_by_name(&document.credentials[0].user)
            .expect("fuzz scenario target resolves");
        granted_actions(snapshot, &user.arn)
    });
    GroundTruth {
        scenario_id,
        account_id: snapshot.account_id.clone(),
        targets,
        simulation_scenario,
        expected_permissions,
    }
}

pub fn load_scenario(id: usize) -> Result<(FixtureDocument, GroundTruth), BenchError> {
    if id == 0 || id > SCENARIO_COUNT {
        return Err(BenchError::UnknownScenario(id));
    }
    let (_, text) = SCENARIO_FILES[id - 1];
    let document = load_fixture_str(text).expect("shipped scenarios load").document;
    let catalog = ActionCatalog::shipped_scenario_catalog();
    let truth = ground_truth(id, &document, Some(&catalog));
    Ok((document, truth))
}

// --- weight tree -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Category {
    UserInlineNames,
    UserInlineDocs,
    UserAttachedList,
    UserAttachedVersion,
    UserAttachedDocs,
    UserAttachedConsolidated,
    GroupsAssociation,
    GroupInlineNames,
    GroupInlineDocs,
    GroupAttachedList,
    GroupAttachedVersion,
    GroupAttachedDocs,
    GroupAttachedConsolidated,
    RolesAssociation,
    RoleInlineNames,
    RoleInlineDocs,
    RoleAttachedList,
    RoleAttachedVersion,
    RoleAttachedDocs,
}

/// What a leaf expects the report to reproduce exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LeafExpect {
    GroupPresent { group: String },
    GroupsEmpty,
    RolePresent { role: String, chain: Vec<String> },
    RolesEmpty,
    InlineName { entity: String, name: String },
    InlineEmpty { entity: String },
    InlineDoc { entity: String, name: String, doc: PolicyDocument },
    AttachedItem { entity: String, policy: String, name: String },
    AttachedEmpty { entity: String },
    AttachedVersion { entity: String, policy: String, vid: String },
    AttachedDoc { entity: String, policy: String, doc: PolicyDocument },
    // Simulation-scenario leaves: expectations are phrased against the
    // reconstruction matched statements can deliver.
    SimGroupPresent { group: String },
    SimInlineName { entity: String, name: String },
    SimInlineActions { entity: String, name: String, actions: BTreeSet<String> },
    SimAttachedItem { entity: String, policy: String, name: String },
    /// Simulation cannot name versions; the correct reconstruction marks
    /// the entry and leaves the version unknown.
    SimAttachedVersionUnknown { entity: String, policy: String },
    SimAttachedActions { entity: String, policy: String, actions: BTreeSet<String> },
    SimAttachedConsolidated { entity: String, policy: String, name: String, actions: BTreeSet<String> },
    SimEmpty { entity: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Leaf {
    pub user: String,
    pub category: Category,
    /// Object within the category; `None` for the empty-category leaf.
    pub object: Option<String>,
    pub weight: f64,
    pub expect: LeafExpect,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightTree {
    pub scenario_id: usize,
    pub leaves: Vec<Leaf>,
}

impl WeightTree {
    pub fn total_weight(&self) -> f64 {
        self.leaves.iter().map(|l| l.weight).sum()
    }
}

const USER_FACET_WEIGHT: f64 = 0.06;
const ASSOCIATION_WEIGHT: f64 = 0.05;
const CONSOLIDATED_WEIGHT: f64 = 0.12;

struct TreeBuilder {
    leaves: Vec<Leaf>,
    user: String,
    divisor: f64,
}

impl TreeBuilder {
    /// Split a category's weight equally over its objects; an empty
    /// category collapses to one leaf that expects correct emptiness.
    fn category<T>(
        &mut self,
        category: Category,
        weight: f64,
        objects: Vec<(String, T)>,
        empty: LeafExpect,
        expect: impl Fn(T) -> LeafExpect,
    ) {
        let weight = weight / self.divisor;
        if objects.is_empty() {
            self.leaves.push(Leaf {
                user: self.user.clone(),
                category,
                object: None,
                weight,
                expect: empty,
            });
            return;
        }
        let per_object = weight / objects.len() as f64;
        for (object, payload) in objects {
            self.leaves.push(Leaf {
                user: self.user.clone(),
                category,
                object: Some(object),
                weight: per_object,
                expect: expect(payload),
            });
        }
    }
}

/// The benchmark weights: five 0.06 facets for the user's own policies,
/// 0.05 for each of the two association facets, and five 0.06 facets each
/// for group and role policies; every category's weight splits equally
/// over its objects, and multi-user scenarios divide everything by the
/// user count. The simulation scenario consolidates user and group managed
/// policies into 0.12 facets and rescales so the tree still sums to 1.
pub fn build_weight_tree(gt: &GroundTruth) -> WeightTree {
    let mut leaves = Vec::new();
    let users = gt.targets.len().max(1) as f64;
    for target in &gt.targets {
        let mut builder =
            TreeBuilder { leaves: Vec::new(), user: target.user_arn.clone(), divisor: users };
        if gt.simulation_scenario {
            simulation_user_leaves(&mut builder, target);
        } else {
            standard_user_leaves(&mut builder, target);
        }
        leaves.extend(builder.leaves);
    }
    let mut tree = WeightTree { scenario_id: gt.scenario_id, leaves };
    let total = tree.total_weight();
    if gt.simulation_scenario && total > 0.0 {
        // The published facet weights do not sum to 1 for this scenario's
        // object counts; uniform rescaling preserves their ratios.
        for leaf in &mut tree.leaves {
            leaf.weight /= total;
        }
    }
    tree
}

fn inline_categories(
    builder: &mut TreeBuilder,
    entity_arn: &str,
    truth: &EntityTruth,
    names_cat: Category,
    docs_cat: Category,
) {
    builder.category(
        names_cat,
        USER_FACET_WEIGHT,
        truth.inline.keys().map(|n| (n.clone(), n.clone())).collect(),
        LeafExpect::InlineEmpty { entity: entity_arn.to_string() },
        |name| LeafExpect::InlineName { entity: entity_arn.to_string(), name },
    );
    builder.category(
        docs_cat,
        USER_FACET_WEIGHT,
        truth.inline.iter().map(|(n, d)| (n.clone(), (n.clone(), d.clone()))).collect(),
        LeafExpect::InlineEmpty { entity: entity_arn.to_string() },
        |(name, doc)| LeafExpect::InlineDoc { entity: entity_arn.to_string(), name, doc },
    );
}

fn attached_categories(
    builder: &mut TreeBuilder,
    entity_arn: &str,
    truth: &EntityTruth,
    cats: (Category, Category, Category),
) {
    let (list_cat, version_cat, docs_cat) = cats;
    builder.category(
        list_cat,
        USER_FACET_WEIGHT,
        truth
            .attached
            .iter()
            .map(|a| (a.arn.clone(), (a.arn.clone(), a.name.clone())))
            .collect(),
        LeafExpect::AttachedEmpty { entity: entity_arn.to_string() },
        |(policy, name)| LeafExpect::AttachedItem { entity: entity_arn.to_string(), policy, name },
    );
    builder.category(
        version_cat,
        USER_FACET_WEIGHT,
        truth
            .attached
            .iter()
            .map(|a| (a.arn.clone(), (a.arn.clone(), a.default_version_id.clone())))
            .collect(),
        LeafExpect::AttachedEmpty { entity: entity_arn.to_string() },
        |(policy, vid)| LeafExpect::AttachedVersion { entity: entity_arn.to_string(), policy, vid },
    );
    builder.category(
        docs_cat,
        USER_FACET_WEIGHT,
        truth
            .attached
            .iter()
            .map(|a| (a.arn.clone(), (a.arn.clone(), a.document.clone())))
            .collect(),
        LeafExpect::AttachedEmpty { entity: entity_arn.to_string() },
        |(policy, doc)| LeafExpect::AttachedDoc { entity: entity_arn.to_string(), policy, doc },
    );
}

fn association_categories(builder: &mut TreeBuilder, target: &UserTruth, simulation: bool) {
    builder.category(
        Category::GroupsAssociation,
        ASSOCIATION_WEIGHT,
        target.groups.iter().map(|g| (g.clone(), g.clone())).collect(),
        LeafExpect::GroupsEmpty,
        |group| {
            if simulation {
                LeafExpect::SimGroupPresent { group }
            } else {
                LeafExpect::GroupPresent { group }
            }
        },
    );
    builder.category(
        Category::RolesAssociation,
        ASSOCIATION_WEIGHT,
        target
            .roles
            .iter()
            .map(|(r, chain)| (r.clone(), (r.clone(), chain.clone())))
            .collect(),
        LeafExpect::RolesEmpty,
        |(role, chain)| LeafExpect::RolePresent { role, chain },
    );
}

fn standard_user_leaves(builder: &mut TreeBuilder, target: &UserTruth) {
    inline_categories(
        builder,
        &target.user_arn,
        &target.user,
        Category::UserInlineNames,
        Category::UserInlineDocs,
    );
    attached_categories(
        builder,
        &target.user_arn,
        &target.user,
        (Category::UserAttachedList, Category::UserAttachedVersion, Category::UserAttachedDocs),
    );
    association_categories(builder, target, false);
    let mut group_inline: Vec<(String, (String, String))> = Vec::new();
    let mut group_inline_docs: Vec<(String, (String, String, PolicyDocument))> = Vec::new();
    let mut group_attached: Vec<(String, (String, AttachedTruth))> = Vec::new();
    for (group, truth) in &target.group_entities {
        for (name, doc) in &truth.inline {
            group_inline.push((format!("{group}:{name}"), (group.clone(), name.clone())));
            group_inline_docs
                .push((format!("{group}:{name}"), (group.clone(), name.clone(), doc.clone())));
        }
        for attached in &truth.attached {
            group_attached
                .push((format!("{group}:{}", attached.arn), (group.clone(), attached.clone())));
        }
    }
    entity_family_leaves(
        builder,
        group_inline,
        group_inline_docs,
        group_attached,
        target.group_entities.keys().cloned().collect(),
        (
            Category::GroupInlineNames,
            Category::GroupInlineDocs,
            Category::GroupAttachedList,
            Category::GroupAttachedVersion,
            Category::GroupAttachedDocs,
        ),
    );
    let mut role_inline: Vec<(String, (String, String))> = Vec::new();
    let mut role_inline_docs: Vec<(String, (String, String, PolicyDocument))> = Vec::new();
    let mut role_attached: Vec<(String, (String, AttachedTruth))> = Vec::new();
    for (role, truth) in &target.role_entities {
        for (name, doc) in &truth.inline {
            role_inline.push((format!("{role}:{name}"), (role.clone(), name.clone())));
            role_inline_docs
                .push((format!("{role}:{name}"), (role.clone(), name.clone(), doc.clone())));
        }
        for attached in &truth.attached {
            role_attached
                .push((format!("{role}:{}", attached.arn), (role.clone(), attached.clone())));
        }
    }
    entity_family_leaves(
        builder,
        role_inline,
        role_inline_docs,
        role_attached,
        target.role_entities.keys().cloned().collect(),
        (
            Category::RoleInlineNames,
            Category::RoleInlineDocs,
            Category::RoleAttachedList,
            Category::RoleAttachedVersion,
            Category::RoleAttachedDocs,
        ),
    );
}

/// Group- or role-family facet categories: objects are the policies across
/// every in-scope entity of that family.
fn entity_family_leaves(
    builder: &mut TreeBuilder,
    inline_names: Vec<(String, (String, String))>,
    inline_docs: Vec<(String, (String, String, PolicyDocument))>,
    attached: Vec<(String, (String, AttachedTruth))>,
    family_entities: Vec<String>,
    cats: (Category, Category, Category, Category, Category),
) {
    let (names_cat, docs_cat, list_cat, version_cat, adocs_cat) = cats;
    let empty_marker = || LeafExpect::InlineEmpty {
        entity: family_entities.first().cloned().unwrap_or_else(|| "-".to_string()),
    };
    let attached_empty = || LeafExpect::AttachedEmpty {
        entity: family_entities.first().cloned().unwrap_or_else(|| "-".to_string()),
    };
    builder.category(names_cat, USER_FACET_WEIGHT, inline_names, empty_marker(), |(entity, name)| {
        LeafExpect::InlineName { entity, name }
    });
    builder.category(
        docs_cat,
        USER_FACET_WEIGHT,
        inline_docs,
        empty_marker(),
        |(entity, name, doc)| LeafExpect::InlineDoc { entity, name, doc },
    );
    builder.category(
        list_cat,
        USER_FACET_WEIGHT,
        attached.clone(),
        attached_empty(),
        |(entity, a)| LeafExpect::AttachedItem { entity, policy: a.arn, name: a.name },
    );
    builder.category(
        version_cat,
        USER_FACET_WEIGHT,
        attached.clone(),
        attached_empty(),
        |(entity, a)| LeafExpect::AttachedVersion {
            entity,
            policy: a.arn,
            vid: a.default_version_id,
        },
    );
    builder.category(adocs_cat, USER_FACET_WEIGHT, attached, attached_empty(), |(entity, a)| {
        LeafExpect::AttachedDoc { entity, policy: a.arn, doc: a.document }
    });
}

/// The simulation scenario: separated inline facets at 0.06, consolidated
/// managed facets at 0.12 for user and groups, standard role facets
/// phrased against the simulation reconstruction.
fn simulation_user_leaves(builder: &mut TreeBuilder, target: &UserTruth) {
    let sim_inline_cats = |builder: &mut TreeBuilder,
                           entity: &str,
                           truth: &EntityTruth,
                           names_cat: Category,
                           docs_cat: Category| {
        builder.category(
            names_cat,
            USER_FACET_WEIGHT,
            truth.sim_inline.keys().map(|n| (n.clone(), n.clone())).collect(),
            LeafExpect::SimEmpty { entity: entity.to_string() },
            |name| LeafExpect::SimInlineName { entity: entity.to_string(), name },
        );
        builder.category(
            docs_cat,
            USER_FACET_WEIGHT,
            truth
                .sim_inline
                .iter()
                .map(|(n, a)| (n.clone(), (n.clone(), a.clone())))
                .collect(),
            LeafExpect::SimEmpty { entity: entity.to_string() },
            |(name, actions)| LeafExpect::SimInlineActions {
                entity: entity.to_string(),
                name,
                actions,
            },
        );
    };
    let sim_consolidated = |builder: &mut TreeBuilder, entity: &str, truth: &EntityTruth, cat: Category| {
        builder.category(
            cat,
            CONSOLIDATED_WEIGHT,
            truth
                .sim_attached
                .iter()
                .map(|(arn, (name, actions))| {
                    (arn.clone(), (arn.clone(), name.clone(), actions.clone()))
                })
                .collect(),
            LeafExpect::SimEmpty { entity: entity.to_string() },
            |(policy, name, actions)| LeafExpect::SimAttachedConsolidated {
                entity: entity.to_string(),
                policy,
                name,
                actions,
            },
        );
    };

    sim_inline_cats(
        builder,
        &target.user_arn,
        &target.user,
        Category::UserInlineNames,
        Category::UserInlineDocs,
    );
    sim_consolidated(builder, &target.user_arn, &target.user, Category::UserAttachedConsolidated);
    association_categories(builder, target, true);
    for (group, truth) in &target.group_entities {
        sim_inline_cats(builder, group, truth, Category::GroupInlineNames, Category::GroupInlineDocs);
        sim_consolidated(builder, group, truth, Category::GroupAttachedConsolidated);
    }
    // Standard five role facets, expressed against what simulation can
    // reconstruct: names and action sets, with versions unknowable.
    let mut names = Vec::new();
    let mut docs = Vec::new();
    let mut attached_list = Vec::new();
    let mut attached_version = Vec::new();
    let mut attached_docs = Vec::new();
    for (role, truth) in &target.role_entities {
        for (name, actions) in &truth.sim_inline {
            names.push((
                format!("{role}:{name}"),
                LeafExpect::SimInlineName { entity: role.clone(), name: name.clone() },
            ));
            docs.push((
                format!("{role}:{name}"),
                LeafExpect::SimInlineActions {
                    entity: role.clone(),
                    name: name.clone(),
                    actions: actions.clone(),
                },
            ));
        }
        for (arn, (name, actions)) in &truth.sim_attached {
            attached_list.push((
                format!("{role}:{arn}"),
                LeafExpect::SimAttachedItem {
                    entity: role.clone(),
                    policy: arn.clone(),
                    name: name.clone(),
                },
            ));
            attached_version.push((
                format!("{role}:{arn}"),
                LeafExpect::SimAttachedVersionUnknown { entity: role.clone(), policy: arn.clone() },
            ));
            attached_docs.push((
                format!("{role}:{arn}"),
                LeafExpect::SimAttachedActions {
                    entity: role.clone(),
                    policy: arn.clone(),
                    actions: actions.clone(),
                },
            ));
        }
    }
    let role_entity = target.role_entities.keys().next().cloned().unwrap_or_else(|| "-".into());
    for (cat, objects) in [
        (Category::RoleInlineNames, names),
        (Category::RoleInlineDocs, docs),
        (Category::RoleAttachedList, attached_list),
        (Category::RoleAttachedVersion, attached_version),
        (Category::RoleAttachedDocs, attached_docs),
    ] {
        builder.category(
            cat,
            USER_FACET_WEIGHT,
            objects,
            LeafExpect::SimEmpty { entity: role_entity.clone() },
            |expect| expect,
        );
    }
}

// --- scoring -------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LeafHit {
    pub user: String,
    pub category: Category,
    pub object: Option<String>,
    pub weight: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageScore {
    pub scenario_id: usize,
    pub value: f64,
    pub leaves: Vec<LeafHit>,
}

/// Score reports against ground truth: each leaf hits iff the report's
/// value equals the fixture truth exactly (documents compared structurally
/// after canonicalization, version ids string-equal, sets order-free).
pub fn score(reports: &[VisionReport], _gt: &GroundTruth, tree: &WeightTree) -> CoverageScore {
    let by_user: BTreeMap<&str, &VisionReport> =
        reports.iter().map(|r| (r.principal_arn.as_str(), r)).collect();
    let mut leaves = Vec::new();
    let mut value = 0.0;
    for leaf in &tree.leaves {
        let hit = by_user
            .get(leaf.user.as_str())
            .map_or(false, |report| leaf_hits(report, &leaf.expect));
        if hit {
            value += leaf.weight;
        }
        leaves.push(LeafHit {
            user: leaf.user.clone(),
            category: leaf.category,
            object: leaf.object.clone(),
            weight: leaf.weight,
            hit,
        });
    }
    CoverageScore { scenario_id: tree.scenario_id, value, leaves }
}

fn entity_section<'r>(
    report: &'r VisionReport,
    entity: &str,
) -> Option<&'r crate::report::EntityReport> {
    if report.user.arn == entity {
        Some(&report.user)
    } else {
        report.groups.get(entity).or_else(|| report.roles.get(entity))
    }
}

fn attached_entry<'r>(
    report: &'r VisionReport,
    entity: &str,
    policy: &str,
) -> Option<&'r crate::report::AttachedReportEntry> {
    entity_section(report, entity)?.attached.iter().find(|a| a.arn == policy)
}

fn sim_policy<'r>(
    report: &'r VisionReport,
    entity: &str,
    inline_name: Option<&str>,
    policy_arn: Option<&str>,
) -> Option<&'r crate::report::SimPolicyReport> {
    report.simulation.as_ref()?.policies.iter().find(|p| {
        p.entity_arn == entity
            && match (inline_name, policy_arn) {
                (Some(name), None) => p.inline && p.policy_name == name,
                (None, Some(arn)) => !p.inline && p.policy_arn.as_deref() == Some(arn),
                _ => false,
            }
    })
}

fn leaf_hits(report: &VisionReport, expect: &LeafExpect) -> bool {
    match expect {
        LeafExpect::GroupPresent { group } => report
            .in_scope_groups
            .as_ref()
            .map_or(false, |groups| groups.contains(group)),
        LeafExpect::GroupsEmpty => {
            report.in_scope_groups.as_ref().map_or(false, |groups| groups.is_empty())
        }
        LeafExpect::RolePresent { role, chain } => report
            .in_scope_roles
            .as_ref()
            .map_or(false, |roles| roles.iter().any(|r| r.arn == *role && r.chain == *chain)),
        LeafExpect::RolesEmpty => {
            report.in_scope_roles.as_ref().map_or(false, |roles| roles.is_empty())
        }
        LeafExpect::InlineName { entity, name } => entity_section(report, entity)
            .map_or(false, |section| section.inline.contains_key(name)),
        LeafExpect::InlineEmpty { entity } => entity_section(report, entity)
            .map_or(false, |section| section.inline_listed && section.inline.is_empty()),
        LeafExpect::InlineDoc { entity, name, doc } => entity_section(report, entity)
            .and_then(|section| section.inline.get(name))
            .map_or(false, |found| found.as_ref() == Some(doc)),
        LeafExpect::AttachedItem { entity, policy, name } => {
            attached_entry(report, entity, policy).map_or(false, |entry| entry.name == *name)
        }
        LeafExpect::AttachedEmpty { entity } => entity_section(report, entity)
            .map_or(false, |section| {
                section.attached_listed.is_some() && section.attached.is_empty()
            }),
        LeafExpect::AttachedVersion { entity, policy, vid } => {
            attached_entry(report, entity, policy)
                .map_or(false, |entry| entry.default_version_id.as_deref() == Some(vid))
        }
        LeafExpect::AttachedDoc { entity, policy, doc } => attached_entry(report, entity, policy)
            .map_or(false, |entry| entry.document.as_ref() == Some(doc)),
        LeafExpect::SimGroupPresent { group } => report
            .simulation
            .as_ref()
            .map_or(false, |sim| sim.groups.contains_key(group)),
        LeafExpect::SimInlineName { entity, name } => {
            sim_policy(report, entity, Some(name), None).is_some()
        }
        LeafExpect::SimInlineActions { entity, name, actions } => {
            sim_policy(report, entity, Some(name), None)
                .map_or(false, |p| p.actions == *actions)
        }
        LeafExpect::SimAttachedItem { entity, policy, name } => {
            sim_policy(report, entity, None, Some(policy))
                .map_or(false, |p| p.policy_name == *name)
        }
        LeafExpect::SimAttachedVersionUnknown { entity, policy } => {
            // Correct under simulation: the entry exists and no invented
            // version id appears anywhere in the regular sections.
            sim_policy(report, entity, None, Some(policy)).is_some()
                && attached_entry(report, entity, policy)
                    .map_or(true, |entry| entry.default_version_id.is_none())
        }
        LeafExpect::SimAttachedActions { entity, policy, actions } => {
            sim_policy(report, entity, None, Some(policy))
                .map_or(false, |p| p.actions == *actions)
        }
        LeafExpect::SimAttachedConsolidated { entity, policy, name, actions } => {
            sim_policy(report, entity, None, Some(policy))
                .map_or(false, |p| p.policy_name == *name && p.actions == *actions)
        }
        LeafExpect::SimEmpty { entity } => report.simulation.as_ref().map_or(false, |sim| {
            !sim.policies.iter().any(|p| p.entity_arn == *entity)
        }),
    }
}

/// The fuzz-coverage formula: |discovered ∩ expected| / |expected|.
pub fn score_fuzz(
    discovered: &BTreeSet<String>,
    expected: &BTreeSet<String>,
) -> Result<f64, BenchError> {
    if expected.is_empty() {
        return Err(BenchError::EmptyExpected);
    }
    let hit = discovered.intersection(expected).count();
    Ok(hit as f64 / expected.len() as f64)
}

/// Arithmetic mean over per-scenario coverage values.
pub fn aggregate(values: &[f64]) -> Result<f64, BenchError> {
    if values.is_empty() {
        return Err(BenchError::EmptyList);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

// --- harness -------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub scenario_id: usize,
    pub score: f64,
    pub calls_made: u64,
    /// Enabled-vs-disabled short-circuit call counts, when measured.
    pub short_circuit_calls: Option<(u64, u64)>,
}

/// Engine configuration the benchmark uses for one scenario. S21 enables
/// the simulation sweep and S22 the read-only fuzz sweep, both under the
/// explicit override since the harness runs cross-principal.
pub fn scenario_options(id: usize) -> RunOptions {
    let mut options = RunOptions { mode: EnumerationMode::Cross, ..RunOptions::default() };
    if id == 21 {
        options.simulation_enabled = true;
        options.force_sweeps = true;
        options.catalog = Some(ActionCatalog::shipped_scenario_catalog());
    }
    if id == 22 {
        options.fuzz_enabled = true;
        options.force_sweeps = true;
        options.catalog = Some(ActionCatalog::shipped_scenario_catalog());
    }
    options
}

pub fn fixture_credentials(document: &FixtureDocument) -> Vec<Credential> {
    document
        .credentials
        .iter()
        .map(|c| Credential {
            access_key_id: c.access_key_id.clone(),
            secret_key: c.secret_key.clone(),
            session_token: c.session_token.clone(),
        })
        .collect()
}

/// Run one scenario under the benchmark configuration and score it.
pub fn run_scenario(id: usize) -> Result<ScenarioOutcome, BenchError> {
    run_scenario_with(id, &scenario_options(id))
}

pub fn run_scenario_with(id: usize, options: &RunOptions) -> Result<ScenarioOutcome, BenchError> {
    let (document, truth) = load_scenario(id)?;
    let backend: Arc<dyn crate::backend::ApiBackend> =
        Arc::new(FixtureBackend::new(&document));
    let credentials = fixture_credentials(&document);
    let outcome = engine::run(Arc::clone(&backend), credentials, options)?;
    let value = score_outcome(id, &truth, &outcome.reports)?;
    // The short-circuit scenarios report the call reduction the snapshot
    // path buys over chain enumeration.
    let short_circuit_calls = if options.short_circuit_enabled && scenario_short_circuits(id) {
        let disabled =
            RunOptions { short_circuit_enabled: false, ..options.clone() };
        let backend: Arc<dyn crate::backend::ApiBackend> =
            Arc::new(FixtureBackend::new(&document));
        let rerun = engine::run(backend, fixture_credentials(&document), &disabled)?;
        Some((outcome.calls_made, rerun.calls_made))
    } else {
        None
    };
    Ok(ScenarioOutcome {
        scenario_id: id,
        score: value,
        calls_made: outcome.calls_made,
        short_circuit_calls,
    })
}

/// Scenarios whose fixtures grant GetAccountAuthorizationDetails somewhere.
pub fn scenario_short_circuits(id: usize) -> bool {
    matches!(id, 9 | 10 | 11 | 17 | 18)
}

/// Score a set of reports for a scenario: the weighted facet tree for
/// S1-S21, the fuzz formula for S22.
pub fn score_outcome(
    _id: usize,
    truth: &GroundTruth,
    reports: &[VisionReport],
) -> Result<f64, BenchError> {
    if let Some(expected) = &truth.expected_permissions {
        let discovered = reports
            .first()
            .and_then(|r| r.fuzz_allowed.clone())
            .unwrap_or_default();
        return score_fuzz(&discovered, expected);
    }
    let tree = build_weight_tree(truth);
    debug_assert!((tree.total_weight() - 1.0).abs() < WEIGHT_EPSILON);
    Ok(score(reports, truth, &tree).value)
}

/// Run the whole suite in scenario order.
pub fn run_all() -> Result<Vec<ScenarioOutcome>, BenchError> {
    (1..=SCENARIO_COUNT).map(run_scenario).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_scenario_is_an_error() {
        assert!(matches!(load_scenario(23), Err(BenchError::UnknownScenario(23))));
        assert!(matches!(load_scenario(0), Err(BenchError::UnknownScenario(0))));
    }

    #[test]
    fn s1_tree_shape() {
        let (_, truth) = load_scenario(1).unwrap();
        let tree = build_weight_tree(&truth);
        assert!((tree.total_weight() - 1.0).abs() < WEIGHT_EPSILON);
        let categories: BTreeSet<Category> = tree.leaves.iter().map(|l| l.category).collect();
        assert_eq!(categories.len(), 17, "17 top-level categories");
        // Two user-attached policies split the 0.06 list facet into 0.03
        // leaves.
        let list_leaves: Vec<&Leaf> = tree
            .leaves
            .iter()
            .filter(|l| l.category == Category::UserAttachedList)
            .collect();
        assert_eq!(list_leaves.len(), 2);
        for leaf in list_leaves {
            assert!((leaf.weight - 0.03).abs() < WEIGHT_EPSILON);
        }
    }

    #[test]
    fn s15_divides_by_user_count() {
        let (_, truth) = load_scenario(15).unwrap();
        let tree = build_weight_tree(&truth);
        assert!((tree.total_weight() - 1.0).abs() < WEIGHT_EPSILON);
        assert_eq!(truth.targets.len(), 4);
        let first_user = &truth.targets[0].user_arn;
        let user_leaf_sum: f64 = tree
            .leaves
            .iter()
            .filter(|l| l.user == *first_user)
            .map(|l| l.weight)
            .sum();
        assert!((user_leaf_sum - 0.25).abs() < WEIGHT_EPSILON);
    }

    #[test]
    fn all_trees_sum_to_one() {
        for id in 1..=21 {
            let (_, truth) = load_scenario(id).unwrap();
            let tree = build_weight_tree(&truth);
            assert!(
                (tree.total_weight() - 1.0).abs() < WEIGHT_EPSILON,
                "scenario {id} sums to {}",
                tree.total_weight()
            );
        }
    }

    #[test]
    fn category_subsums_never_exceed_category_weight() {
        for id in 1..=20 {
            let (_, truth) = load_scenario(id).unwrap();
            let tree = build_weight_tree(&truth);
            let users = truth.targets.len() as f64;
            let mut sums: BTreeMap<(String, Category), f64> = BTreeMap::new();
            for leaf in &tree.leaves {
                *sums.entry((leaf.user.clone(), leaf.category)).or_default() += leaf.weight;
            }
            for ((_, category), sum) in sums {
                let cap = match category {
                    Category::GroupsAssociation | Category::RolesAssociation => 0.05,
                    _ => 0.06,
                } / users;
                assert!(sum <= cap + WEIGHT_EPSILON, "scenario {id} {category:?} sums {sum}");
            }
        }
    }

    #[test]
    fn fuzz_formula() {
        let expected: BTreeSet<String> = (0..10).map(|i| format!("svc:A{i}")).collect();
        let mut discovered = expected.clone();
        discovered.remove("svc:A0");
        assert_eq!(score_fuzz(&discovered, &expected).unwrap(), 0.9);
        assert_eq!(score_fuzz(&expected, &expected).unwrap(), 1.0);
        let disjoint: BTreeSet<String> = ["x:Y".to_string()].into();
        assert_eq!(score_fuzz(&disjoint, &expected).unwrap(), 0.0);
        assert!(matches!(
            score_fuzz(&discovered, &BTreeSet::new()),
            Err(BenchError::EmptyExpected)
        ));
    }

    #[test]
    fn aggregate_is_the_mean() {
        assert_eq!(aggregate(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(aggregate(&[1.0; 22]).unwrap(), 1.0);
        assert_eq!(aggregate(&[0.895]).unwrap(), 0.895);
        assert!(matches!(aggregate(&[]), Err(BenchError::EmptyList)));
    }

    #[test]
    fn s8_ground_truth_reaches_all_four_roles() {
        let (_, truth) = load_scenario(8).unwrap();
        let roles = &truth.targets[0].roles;
        assert_eq!(roles.len(), 4);
        let chain_d = &roles["arn:aws:iam::100000000008:role/S8_RoleD"];
        assert_eq!(
            chain_d,
            &vec![
                "arn:aws:iam::100000000008:user/S8_UserA".to_string(),
                "arn:aws:iam::100000000008:role/S8_RoleA".to_string(),
                "arn:aws:iam::100000000008:role/S8_RoleB".to_string(),
                "arn:aws:iam::100000000008:role/S8_RoleC".to_string(),
            ]
        );
    }

    #[test]
    fn s22_expected_permissions_are_the_eleven_granted_actions() {
        let (_, truth) = load_scenario(22).unwrap();
        let expected = truth.expected_permissions.as_ref().unwrap();
        assert_eq!(expected.len(), 11);
        assert!(expected.contains("s3:ListBucket"));
        assert!(expected.contains("cloudformation:ListStacks"));
    }
}
