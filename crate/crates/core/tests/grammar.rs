use cgt_core::grammar::python::{ast_to_code, parse_to_ast, python_grammar};
use cgt_core::grammar::{ast_to_rules, rules_to_ast, Action, RuleSequence};
use cgt_core::text::generate_synthetic_corpus;
use proptest::prelude::*;

/// Card programs in the style of the benchmark's reference code.
const CARD_PROGRAMS: &[&str] = &[
    "class StonetuskBoar(MinionCard):\n    def __init__(self):\n        super().__init__('Stonetusk Boar', 1, CHARACTER_CLASS.ALL, CARD_RARITY.FREE, minion_type=MINION_TYPE.BEAST)\n\n    def create_minion(self, player):\n        return Minion(1, 1, charge=True)\n",
    "class Flamestrike(SpellCard):\n    def __init__(self):\n        super().__init__('Flamestrike', 7, CHARACTER_CLASS.MAGE, CARD_RARITY.COMMON)\n\n    def use(self, player, game):\n        super().use(player, game)\n        for minion in copy.copy(game.other_player.minions):\n            minion.damage(player.effective_spell_damage(4), self)\n",
    "class ArcaniteReaper(WeaponCard):\n    def __init__(self):\n        super().__init__('Arcanite Reaper', 5, CHARACTER_CLASS.WARRIOR, CARD_RARITY.COMMON)\n\n    def create_weapon(self, player):\n        return Weapon(5, 2)\n",
    "class AcolyteOfPain(MinionCard):\n    def __init__(self):\n        super().__init__('Acolyte of Pain', 3, CHARACTER_CLASS.ALL, CARD_RARITY.COMMON)\n\n    def create_minion(self, player):\n        return Minion(1, 3, effects=[Effect(Damaged(), ActionTag(Draw(), PlayerSelector()))])\n",
    "class Whirlwind(SpellCard):\n    def __init__(self):\n        super().__init__('Whirlwind', 1, CHARACTER_CLASS.WARRIOR, CARD_RARITY.COMMON)\n\n    def use(self, player, game):\n        super().use(player, game)\n        targets = copy.copy(game.other_player.minions)\n        targets.extend(game.current_player.minions)\n        for minion in targets:\n            minion.damage(player.effective_spell_damage(1), self)\n",
    "class Equality(SpellCard):\n    def __init__(self):\n        super().__init__('Equality', 2, CHARACTER_CLASS.PALADIN, CARD_RARITY.RARE)\n\n    def use(self, player, game):\n        super().use(player, game)\n        for minion in game.current_player.minions + game.other_player.minions:\n            minion.set_health_to(1)\n\n    def can_use(self, player, game):\n        return super().can_use(player, game) and len(game.current_player.minions) + len(game.other_player.minions) > 0\n",
];

fn round_trip(src: &str) {
    let g = python_grammar();
    let ast = parse_to_ast(src, g).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let rules = ast_to_rules(&ast, g).unwrap();
    let replay = rules_to_ast(&rules, g).unwrap();
    assert!(replay.frontier.is_none());
    assert_eq!(replay.tree, ast);
    let code = ast_to_code(&replay.tree).unwrap();
    assert_eq!(parse_to_ast(&code, g).unwrap(), ast, "{code}");
    let text = rules.to_text();
    assert_eq!(RuleSequence::from_text(&text).unwrap(), rules);
}

#[test]
fn card_programs_round_trip() {
    for src in CARD_PROGRAMS {
        round_trip(src);
    }
}

#[test]
fn two_hundred_synthetic_programs_round_trip() {
    let corpus = generate_synthetic_corpus(200, 11, 5.0, 1 << 28).unwrap();
    for r in &corpus.records {
        round_trip(&r.code);
        let ast = parse_to_ast(&r.code, python_grammar()).unwrap();
        assert_eq!(ast_to_code(&ast).unwrap(), r.code);
    }
}

#[test]
fn truncated_sequences_leave_a_frontier() {
    let g = python_grammar();
    let ast = parse_to_ast(CARD_PROGRAMS[0], g).unwrap();
    let rules = ast_to_rules(&ast, g).unwrap();
    for cut in [1, rules.len() / 3, rules.len() - 1] {
        let prefix = RuleSequence::new(rules.actions[..cut].to_vec());
        assert!(rules_to_ast(&prefix, g).unwrap().frontier.is_some());
    }
}

#[test]
fn illegal_rule_is_rejected() {
    let g = python_grammar();
    let module = g.rules_for("root")[0];
    let not_legal = (0..g.len()).find(|&r| !g.legal_rules("root", cgt_core::grammar::Hole::Node).contains(&r)).unwrap();
    assert!(rules_to_ast(&RuleSequence::new(vec![Action::ApplyRule(not_legal)]), g).is_err());
    assert!(rules_to_ast(&RuleSequence::new(vec![Action::ApplyRule(module)]), g).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_seeds_round_trip(seed in any::<u64>()) {
        let corpus = generate_synthetic_corpus(3, seed, 5.0, 1 << 28).unwrap();
        for r in &corpus.records {
            round_trip(&r.code);
        }
    }

    #[test]
    fn rule_text_round_trips(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let g = python_grammar();
        let corpus = generate_synthetic_corpus(1, seed, 5.0, 1 << 28).unwrap();
        let rules = ast_to_rules(&parse_to_ast(&corpus.records[0].code, g).unwrap(), g).unwrap();
        let n = (rules.len() as f64 * cut) as usize;
        let prefix = RuleSequence::new(rules.actions[..n].to_vec());
        prop_assert_eq!(RuleSequence::from_text(&prefix.to_text()).unwrap(), prefix.clone());
        let replay = rules_to_ast(&prefix, g).unwrap();
        prop_assert_eq!(ast_to_rules(&replay.tree, g).is_ok(), n == rules.len());
    }
}
