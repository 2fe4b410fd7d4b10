//! Ground-truth domains shipped with the crate, each with five sentence
//! templates per predicate and a random initial-state sampler.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ActionSchema, Domain, LiftedAtom, ObjectRef, Param, Proposition, State, TopicalProposition,
    TypeName,
};

use super::render::SentenceTemplate;

pub type InitSampler = fn(&[ObjectRef], &mut ChaCha8Rng) -> State;

#[derive(Debug, Clone)]
pub struct BundledDomain {
    pub domain: Domain,
    pub templates: Vec<SentenceTemplate>,
    /// Predicates a generated goal is drawn from.
    pub goal_predicates: Vec<String>,
    /// Objects per type; object `k` of type `T` is named `T{k}` starting at 1.
    pub object_counts: Vec<(TypeName, usize)>,
    pub sample_init: InitSampler,
}

impl BundledDomain {
    pub fn objects(&self) -> Vec<ObjectRef> {
        self.object_counts
            .iter()
            .flat_map(|(t, n)| (1..=*n).map(move |k| ObjectRef::new(format!("{t}{k}"), t.as_str())))
            .collect()
    }

    pub fn template_for(&self, topical: &TopicalProposition) -> Option<&SentenceTemplate> {
        self.templates.iter().find(|t| &t.topical == topical)
    }
}

pub fn by_name(name: &str) -> Option<BundledDomain> {
    match name {
        "blocks" => Some(blocks()),
        "minecraft" => Some(minecraft()),
        "baking" => Some(baking()),
        _ => None,
    }
}

pub const NAMES: &[&str] = &["blocks", "minecraft", "baking"];

fn atom(p: &str, args: &[usize]) -> LiftedAtom {
    LiftedAtom::new(p, args.to_vec())
}

fn params(spec: &[(&str, &str)]) -> Vec<Param> {
    spec.iter().map(|(n, t)| Param::new(*n, *t)).collect()
}

fn tpl(pred: &str, sig: &[&str], patterns: [&str; 5]) -> SentenceTemplate {
    SentenceTemplate {
        topical: TopicalProposition::new(pred, sig),
        patterns: patterns.iter().map(|s| s.to_string()).collect(),
    }
}

fn domain(name: &str, types: &[&str], templates: &[SentenceTemplate], actions: Vec<ActionSchema>) -> Domain {
    let mut d = Domain::new(name);
    d.types = types.iter().map(|t| TypeName::new(*t)).collect();
    d.predicates = templates.iter().map(|t| t.topical.clone()).collect();
    d.actions = actions;
    d
}

fn prop(p: &str, args: &[&ObjectRef]) -> Proposition {
    Proposition::new(p, args.iter().map(|o| (*o).clone()).collect())
}

fn of_type<'a>(objects: &'a [ObjectRef], ty: &str) -> Vec<&'a ObjectRef> {
    objects.iter().filter(|o| o.ty.as_str() == ty).collect()
}

pub fn blocks() -> BundledDomain {
    let templates = vec![
        tpl(
            "on",
            &["Block", "Block"],
            [
                "{0} is on {1}.",
                "{1} is under {0}.",
                "{0} sits on top of {1}.",
                "{0} is stacked upon {1}.",
                "{1} supports {0}.",
            ],
        ),
        tpl(
            "on-table",
            &["Block"],
            [
                "{0} is on table.",
                "{0} is placed on the table.",
                "{0} rests directly on the table.",
                "{0} lies on the table surface.",
                "The table carries {0}.",
            ],
        ),
        tpl(
            "clear",
            &["Block"],
            [
                "{0} is clear.",
                "Nothing is on {0}.",
                "{0} has nothing above it.",
                "The top of {0} is free.",
                "No block covers {0}.",
            ],
        ),
        tpl(
            "holding",
            &["Block"],
            [
                "The hand is holding {0}.",
                "{0} is held by the hand.",
                "The gripper grasps {0}.",
                "{0} is in the gripper.",
                "The robot arm lifts {0}.",
            ],
        ),
        tpl(
            "hand-empty",
            &[],
            [
                "The hand is empty.",
                "The robot hand holds nothing.",
                "The gripper is idle.",
                "Nothing is in the hand.",
                "The robot arm carries no block.",
            ],
        ),
    ];
    let b = "Block";
    let actions = vec![
        ActionSchema::new("pick-up", params(&[("?x", b)]))
            .with_pre([atom("clear", &[0]), atom("on-table", &[0]), atom("hand-empty", &[])])
            .with_add([atom("holding", &[0])])
            .with_del([atom("clear", &[0]), atom("on-table", &[0]), atom("hand-empty", &[])]),
        ActionSchema::new("put-down", params(&[("?x", b), ("?y", b)]))
            .with_pre([atom("holding", &[0]), atom("clear", &[1])])
            .with_add([atom("on", &[0, 1]), atom("clear", &[0]), atom("hand-empty", &[])])
            .with_del([atom("holding", &[0]), atom("clear", &[1])]),
        ActionSchema::new("unstack", params(&[("?x", b), ("?y", b)]))
            .with_pre([atom("on", &[0, 1]), atom("clear", &[0]), atom("hand-empty", &[])])
            .with_add([atom("holding", &[0]), atom("clear", &[1])])
            .with_del([atom("on", &[0, 1]), atom("clear", &[0]), atom("hand-empty", &[])]),
        ActionSchema::new("put-on-table", params(&[("?x", b)]))
            .with_pre([atom("holding", &[0])])
            .with_add([atom("on-table", &[0]), atom("clear", &[0]), atom("hand-empty", &[])])
            .with_del([atom("holding", &[0])]),
    ];
    BundledDomain {
        domain: domain("blocks", &[b], &templates, actions),
        templates,
        goal_predicates: vec!["on".into(), "on-table".into()],
        object_counts: vec![(TypeName::new(b), 5)],
        sample_init: blocks_init,
    }
}

/// Random tower configuration with an empty hand.
fn blocks_init(objects: &[ObjectRef], rng: &mut ChaCha8Rng) -> State {
    let mut blocks = of_type(objects, "Block");
    blocks.shuffle(rng);
    let mut towers: Vec<Vec<&ObjectRef>> = Vec::new();
    for b in blocks {
        let k = rng.random_range(0..=towers.len());
        if k == towers.len() {
            towers.push(vec![b]);
        } else {
            towers[k].push(b);
        }
    }
    let mut s = State::new();
    s.insert(prop("hand-empty", &[]));
    for tower in towers {
        s.insert(prop("on-table", &[tower[0]]));
        for w in tower.windows(2) {
            s.insert(prop("on", &[w[1], w[0]]));
        }
        s.insert(prop("clear", &[tower[tower.len() - 1]]));
    }
    s
}

pub fn minecraft() -> BundledDomain {
    let templates = vec![
        tpl(
            "at",
            &["Agent", "Location"],
            [
                "{0} stands at {1}.",
                "You are {0} and you are at {1}.",
                "{0} is located at {1}.",
                "You see {0} near {1}.",
                "{1} is where {0} is.",
            ],
        ),
        tpl(
            "log-at",
            &["Log", "Location"],
            [
                "You see a log {0} at {1}.",
                "A log {0} lies at {1}.",
                "There is a log {0} in {1}.",
                "You find a log {0} at {1}.",
                "{1} contains a log {0}.",
            ],
        ),
        tpl(
            "has-log",
            &["Agent", "Log"],
            [
                "{0} has a log {1}.",
                "{0} carries a log {1}.",
                "A log {1} is in the inventory of {0}.",
                "{0} picked up a log {1}.",
                "The log {1} belongs to {0}.",
            ],
        ),
        tpl(
            "has-plank",
            &["Agent", "Plank"],
            [
                "{0} has a plank {1}.",
                "{0} holds a plank {1}.",
                "A plank {1} is in the inventory of {0}.",
                "{0} crafted a plank {1}.",
                "The plank {1} belongs to {0}.",
            ],
        ),
        tpl(
            "stored",
            &["Plank", "Chest"],
            [
                "A plank {0} is stored in {1}.",
                "You store a plank {0} in {1}.",
                "{1} keeps a plank {0}.",
                "The repository {1} has a plank {0}.",
                "A plank {0} rests in the repository {1}.",
            ],
        ),
        tpl(
            "chest-at",
            &["Chest", "Location"],
            [
                "The repository {0} is at {1}.",
                "You see a repository {0} at {1}.",
                "{1} has a repository {0}.",
                "There is a repository {0} in {1}.",
                "A repository {0} stands at {1}.",
            ],
        ),
        tpl(
            "grass-at",
            &["Grass", "Location"],
            [
                "You find a grass {0} at {1}.",
                "You see a grass {0} at {1}.",
                "A grass {0} grows at {1}.",
                "There is a grass {0} in {1}.",
                "{1} contains a grass {0}.",
            ],
        ),
        tpl(
            "has-grass",
            &["Agent", "Grass"],
            [
                "{0} has a grass {1}.",
                "{0} collected a grass {1}.",
                "A grass {1} is in the inventory of {0}.",
                "{0} carries a grass {1}.",
                "The grass {1} belongs to {0}.",
            ],
        ),
    ];
    let actions = vec![
        ActionSchema::new("move", params(&[("?a", "Agent"), ("?from", "Location"), ("?to", "Location")]))
            .with_pre([atom("at", &[0, 1])])
            .with_add([atom("at", &[0, 2])])
            .with_del([atom("at", &[0, 1])]),
        ActionSchema::new("collect-log", params(&[("?a", "Agent"), ("?g", "Log"), ("?l", "Location")]))
            .with_pre([atom("at", &[0, 2]), atom("log-at", &[1, 2])])
            .with_add([atom("has-log", &[0, 1])])
            .with_del([atom("log-at", &[1, 2])]),
        ActionSchema::new("craft-plank", params(&[("?a", "Agent"), ("?g", "Log"), ("?p", "Plank")]))
            .with_pre([atom("has-log", &[0, 1])])
            .with_add([atom("has-plank", &[0, 2])])
            .with_del([atom("has-log", &[0, 1])]),
        ActionSchema::new(
            "store-plank",
            params(&[("?a", "Agent"), ("?p", "Plank"), ("?c", "Chest"), ("?l", "Location")]),
        )
        .with_pre([atom("at", &[0, 3]), atom("chest-at", &[2, 3]), atom("has-plank", &[0, 1])])
        .with_add([atom("stored", &[1, 2])])
        .with_del([atom("has-plank", &[0, 1])]),
        ActionSchema::new("collect-grass", params(&[("?a", "Agent"), ("?s", "Grass"), ("?l", "Location")]))
            .with_pre([atom("at", &[0, 2]), atom("grass-at", &[1, 2])])
            .with_add([atom("has-grass", &[0, 1])])
            .with_del([atom("grass-at", &[1, 2])]),
    ];
    let types = ["Agent", "Chest", "Grass", "Location", "Log", "Plank"];
    BundledDomain {
        domain: domain("minecraft", &types, &templates, actions),
        templates,
        goal_predicates: vec!["stored".into(), "has-plank".into(), "has-grass".into()],
        object_counts: vec![
            (TypeName::new("Agent"), 1),
            (TypeName::new("Location"), 3),
            (TypeName::new("Log"), 2),
            (TypeName::new("Plank"), 2),
            (TypeName::new("Chest"), 1),
            (TypeName::new("Grass"), 2),
        ],
        sample_init: minecraft_init,
    }
}

fn minecraft_init(objects: &[ObjectRef], rng: &mut ChaCha8Rng) -> State {
    let locations = of_type(objects, "Location");
    let mut s = State::new();
    let mut place = |pred: &str, o: &ObjectRef, rng: &mut ChaCha8Rng| {
        let l = locations[rng.random_range(0..locations.len())];
        s.insert(prop(pred, &[o, l]));
    };
    for a in of_type(objects, "Agent") {
        place("at", a, rng);
    }
    for g in of_type(objects, "Log") {
        place("log-at", g, rng);
    }
    for c in of_type(objects, "Chest") {
        place("chest-at", c, rng);
    }
    for g in of_type(objects, "Grass") {
        place("grass-at", g, rng);
    }
    s
}

pub fn baking() -> BundledDomain {
    let templates = vec![
        tpl(
            "has-egg",
            &["Egg"],
            [
                "You have an egg {0}.",
                "An egg {0} is available.",
                "{0} is a fresh egg on the counter.",
                "There is an egg {0} in the kitchen.",
                "The egg {0} is ready to use.",
            ],
        ),
        tpl(
            "has-flour",
            &["Flour"],
            [
                "You have a bag of flour {0}.",
                "A bag of flour {0} is available.",
                "{0} is flour on the counter.",
                "There is flour {0} in the kitchen.",
                "The flour {0} is ready to use.",
            ],
        ),
        tpl(
            "egg-beaten",
            &["Egg"],
            [
                "The egg {0} is beaten.",
                "{0} has been whisked.",
                "You beat the egg {0}.",
                "The egg {0} is whipped into foam.",
                "{0} is a beaten egg.",
            ],
        ),
        tpl(
            "egg-in",
            &["Egg", "Pan"],
            [
                "The egg {0} is in the pan {1}.",
                "You put the egg {0} into {1}.",
                "{1} contains the egg {0}.",
                "The egg {0} was cracked into {1}.",
                "Inside {1} there is the egg {0}.",
            ],
        ),
        tpl(
            "flour-in",
            &["Flour", "Pan"],
            [
                "The flour {0} is in the pan {1}.",
                "You pour the flour {0} into {1}.",
                "{1} contains the flour {0}.",
                "The flour {0} was sifted into {1}.",
                "Inside {1} there is the flour {0}.",
            ],
        ),
        tpl(
            "pan-clean",
            &["Pan"],
            [
                "The pan {0} is clean.",
                "{0} is an empty clean pan.",
                "The pan {0} is spotless.",
                "Nothing is in the pan {0}.",
                "{0} was washed and is ready.",
            ],
        ),
        tpl(
            "mixed",
            &["Pan"],
            [
                "The batter in {0} is mixed.",
                "You mixed the ingredients in {0}.",
                "{0} holds a smooth batter.",
                "The pan {0} has mixed batter.",
                "The batter in the pan {0} is blended.",
            ],
        ),
        tpl(
            "in-oven",
            &["Pan", "Oven"],
            [
                "The pan {0} is in the oven {1}.",
                "You put the pan {0} into the oven {1}.",
                "{1} contains the pan {0}.",
                "The oven {1} is baking the pan {0}.",
                "Inside the oven {1} is the pan {0}.",
            ],
        ),
        tpl(
            "oven-free",
            &["Oven"],
            [
                "The oven {0} is free.",
                "The oven {0} is empty.",
                "Nothing is inside the oven {0}.",
                "{0} has room for a pan.",
                "The oven {0} is unoccupied.",
            ],
        ),
        tpl(
            "oven-hot",
            &["Oven"],
            [
                "The oven {0} is hot.",
                "The oven {0} is preheated.",
                "{0} has reached baking temperature.",
                "The oven {0} is heated up.",
                "The oven {0} glows warm.",
            ],
        ),
        tpl(
            "oven-cold",
            &["Oven"],
            [
                "The oven {0} is cold.",
                "The oven {0} is switched off.",
                "{0} has not been heated.",
                "The oven {0} is cool.",
                "The oven {0} needs preheating.",
            ],
        ),
        tpl(
            "pan-used",
            &["Pan"],
            [
                "The pan {0} is dirty.",
                "The pan {0} has been used.",
                "{0} needs washing.",
                "The pan {0} is greasy.",
                "There are crumbs in the pan {0}.",
            ],
        ),
        tpl(
            "cake-ready",
            &["Cake"],
            [
                "The cake {0} is baked.",
                "The cake {0} is ready.",
                "{0} is a finished cake.",
                "You baked the cake {0}.",
                "The cake {0} smells delicious.",
            ],
        ),
        tpl(
            "souffle-ready",
            &["Souffle"],
            [
                "The souffle {0} is baked.",
                "The souffle {0} is ready.",
                "{0} is a finished souffle.",
                "You baked the souffle {0}.",
                "The souffle {0} has risen nicely.",
            ],
        ),
    ];
    let actions = vec![
        ActionSchema::new("beat-egg", params(&[("?e", "Egg")]))
            .with_pre([atom("has-egg", &[0])])
            .with_add([atom("egg-beaten", &[0])])
            .with_del([atom("has-egg", &[0])]),
        ActionSchema::new("put-egg", params(&[("?e", "Egg"), ("?p", "Pan")]))
            .with_pre([atom("has-egg", &[0]), atom("pan-clean", &[1])])
            .with_add([atom("egg-in", &[0, 1])])
            .with_del([atom("has-egg", &[0])]),
        ActionSchema::new("put-flour", params(&[("?f", "Flour"), ("?p", "Pan")]))
            .with_pre([atom("has-flour", &[0]), atom("pan-clean", &[1])])
            .with_add([atom("flour-in", &[0, 1])])
            .with_del([atom("has-flour", &[0])]),
        ActionSchema::new("mix", params(&[("?e", "Egg"), ("?f", "Flour"), ("?p", "Pan")]))
            .with_pre([atom("egg-in", &[0, 2]), atom("flour-in", &[1, 2]), atom("pan-clean", &[2])])
            .with_add([atom("mixed", &[2])])
            .with_del([atom("egg-in", &[0, 2]), atom("flour-in", &[1, 2]), atom("pan-clean", &[2])]),
        ActionSchema::new("heat-oven", params(&[("?o", "Oven")]))
            .with_pre([atom("oven-cold", &[0])])
            .with_add([atom("oven-hot", &[0])])
            .with_del([atom("oven-cold", &[0])]),
        ActionSchema::new("put-in-oven", params(&[("?p", "Pan"), ("?o", "Oven")]))
            .with_pre([atom("mixed", &[0]), atom("oven-hot", &[1]), atom("oven-free", &[1])])
            .with_add([atom("in-oven", &[0, 1])])
            .with_del([atom("mixed", &[0]), atom("oven-free", &[1])]),
        ActionSchema::new("bake-cake", params(&[("?p", "Pan"), ("?o", "Oven"), ("?c", "Cake")]))
            .with_pre([atom("in-oven", &[0, 1])])
            .with_add([atom("cake-ready", &[2]), atom("pan-used", &[0]), atom("oven-free", &[1])])
            .with_del([atom("in-oven", &[0, 1])]),
        ActionSchema::new(
            "bake-souffle",
            params(&[("?p", "Pan"), ("?o", "Oven"), ("?s", "Souffle"), ("?e", "Egg")]),
        )
        .with_pre([atom("in-oven", &[0, 1]), atom("egg-beaten", &[3])])
        .with_add([atom("souffle-ready", &[2]), atom("pan-used", &[0]), atom("oven-free", &[1])])
        .with_del([atom("in-oven", &[0, 1]), atom("egg-beaten", &[3])]),
    ];
    let types = ["Cake", "Egg", "Flour", "Oven", "Pan", "Souffle"];
    BundledDomain {
        domain: domain("baking", &types, &templates, actions),
        templates,
        goal_predicates: vec!["cake-ready".into(), "souffle-ready".into(), "mixed".into()],
        object_counts: vec![
            (TypeName::new("Egg"), 3),
            (TypeName::new("Flour"), 2),
            (TypeName::new("Pan"), 2),
            (TypeName::new("Oven"), 1),
            (TypeName::new("Cake"), 1),
            (TypeName::new("Souffle"), 1),
        ],
        sample_init: baking_init,
    }
}

fn baking_init(objects: &[ObjectRef], rng: &mut ChaCha8Rng) -> State {
    let mut s = State::new();
    for e in of_type(objects, "Egg") {
        s.insert(prop("has-egg", &[e]));
    }
    for f in of_type(objects, "Flour") {
        s.insert(prop("has-flour", &[f]));
    }
    for p in of_type(objects, "Pan") {
        s.insert(prop("pan-clean", &[p]));
    }
    for o in of_type(objects, "Oven") {
        s.insert(prop("oven-free", &[o]));
        if rng.random_bool(0.5) {
            s.insert(prop("oven-hot", &[o]));
        } else {
            s.insert(prop("oven-cold", &[o]));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn table_shapes() {
        let expect = [("blocks", 5, 4), ("minecraft", 8, 5), ("baking", 14, 8)];
        for (name, props, actions) in expect {
            let b = by_name(name).unwrap();
            assert_eq!(b.domain.predicates.len(), props, "{name}");
            assert_eq!(b.domain.actions.len(), actions, "{name}");
            assert_eq!(b.templates.len(), props);
            b.domain.validate().unwrap();
        }
    }

    #[test]
    fn blocks_init_is_a_valid_configuration() {
        let b = blocks();
        let objs = b.objects();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = (b.sample_init)(&objs, &mut rng);
            for o in &objs {
                let supported = s.iter().filter(|p| {
                    (p.predicate == "on-table" && p.params[0] == *o)
                        || (p.predicate == "on" && p.params[0] == *o)
                });
                assert_eq!(supported.count(), 1, "{o:?} must rest on exactly one thing");
            }
        }
    }
}
