//! Fixed vocabulary used to compose captions, titles and histories.
//!
//! Each theme owns a disjoint set of words; the featurizer in
//! [`crate::policylab`] relies on that disjointness to read theme emphasis
//! back out of caption text.

/// One latent theme (a genre) and the words that signal it.
#[derive(Debug)]
pub struct Theme {
    pub genre: &'static str,
    pub subjects: &'static [&'static str],
    pub verbs: &'static [&'static str],
    pub settings: &'static [&'static str],
    pub moods: &'static [&'static str],
}

impl Theme {
    /// Every word that signals this theme, including the genre name.
    pub fn words(&self) -> impl Iterator<Item = &'static str> + '_ {
        std::iter::once(self.genre)
            .chain(self.subjects.iter().copied())
            .chain(self.verbs.iter().copied())
            .chain(self.settings.iter().copied())
            .chain(self.moods.iter().copied())
    }
}

pub const THEMES: [Theme; 8] = [
    Theme {
        genre: "action",
        subjects: &["soldier", "commando", "racer", "mercenary", "gunslinger", "fighter", "agent", "pilot", "bodyguard", "brawler"],
        verbs: &["sprints", "leaps", "fires", "punches", "dodges", "charges", "explodes", "swerves", "vaults", "grapples"],
        settings: &["battlefield", "rooftop", "highway", "warehouse", "bunker", "convoy", "helicopter", "freeway", "arena", "armory"],
        moods: &["explosive", "relentless", "adrenaline", "fierce", "kinetic", "ferocious", "gritty", "furious", "breakneck", "combative"],
    },
    Theme {
        genre: "romance",
        subjects: &["lovers", "bride", "sweetheart", "suitor", "couple", "fiance", "admirer", "beloved", "paramour", "newlyweds"],
        verbs: &["embraces", "kisses", "caresses", "gazes", "waltzes", "blushes", "cuddles", "yearns", "swoons", "serenades"],
        settings: &["garden", "balcony", "candlelight", "vineyard", "gazebo", "ballroom", "meadow", "terrace", "boardwalk", "orchard"],
        moods: &["tender", "passionate", "romantic", "wistful", "intimate", "affectionate", "dreamy", "longing", "heartfelt", "amorous"],
    },
    Theme {
        genre: "comedy",
        subjects: &["clown", "prankster", "jester", "goofball", "comedian", "oddball", "sidekick", "buffoon", "klutz", "trickster"],
        verbs: &["trips", "grins", "giggles", "winks", "juggles", "stumbles", "chuckles", "mugs", "pranks", "smirks"],
        settings: &["diner", "carnival", "laundromat", "cafeteria", "circus", "bowling", "picnic", "karaoke", "barbershop", "sitcom"],
        moods: &["goofy", "zany", "hilarious", "playful", "silly", "cheeky", "quirky", "witty", "slapstick", "absurd"],
    },
    Theme {
        genre: "horror",
        subjects: &["ghoul", "zombie", "phantom", "vampire", "witch", "specter", "demon", "stalker", "corpse", "creature"],
        verbs: &["lurks", "shrieks", "creeps", "haunts", "stalks", "claws", "bleeds", "twitches", "snarls", "crawls"],
        settings: &["crypt", "graveyard", "cellar", "asylum", "morgue", "catacomb", "swamp", "dungeon", "chapel", "attic"],
        moods: &["eerie", "sinister", "dreadful", "ominous", "macabre", "chilling", "menacing", "ghastly", "grim", "unsettling"],
    },
    Theme {
        genre: "family",
        subjects: &["grandma", "toddler", "puppy", "siblings", "parents", "kids", "grandpa", "twins", "kitten", "schoolgirl"],
        verbs: &["hugs", "smiles", "plays", "shares", "bakes", "laughs", "cheers", "waves", "sings", "nurtures"],
        settings: &["kitchen", "backyard", "treehouse", "farmhouse", "playground", "campsite", "porch", "classroom", "nursery", "fireplace"],
        moods: &["warm", "wholesome", "cozy", "gentle", "cheerful", "heartwarming", "joyful", "caring", "sunny", "nostalgic"],
    },
    Theme {
        genre: "mystery",
        subjects: &["detective", "sleuth", "inspector", "suspect", "informant", "witness", "investigator", "stranger", "butler", "heiress"],
        verbs: &["investigates", "whispers", "conceals", "deduces", "searches", "examines", "hides", "observes", "eavesdrops", "unravels"],
        settings: &["mansion", "library", "alley", "study", "manor", "archive", "harbor", "lighthouse", "train", "corridor"],
        moods: &["enigmatic", "shadowy", "cryptic", "suspicious", "secretive", "puzzling", "brooding", "noir", "elusive", "hushed"],
    },
    Theme {
        genre: "scifi",
        subjects: &["astronaut", "android", "robot", "alien", "cyborg", "engineer", "clone", "navigator", "hologram", "scientist"],
        verbs: &["floats", "scans", "teleports", "hovers", "calibrates", "transmits", "orbits", "powers", "launches", "decodes"],
        settings: &["spaceship", "starbase", "laboratory", "nebula", "asteroid", "reactor", "cockpit", "planet", "colony", "satellite"],
        moods: &["futuristic", "cosmic", "luminous", "synthetic", "electric", "galactic", "sleek", "otherworldly", "technological", "stellar"],
    },
    Theme {
        genre: "drama",
        subjects: &["widow", "father", "mother", "teacher", "lawyer", "immigrant", "daughter", "son", "patient", "veteran"],
        verbs: &["weeps", "confronts", "remembers", "argues", "mourns", "reflects", "struggles", "forgives", "hesitates", "endures"],
        settings: &["courtroom", "hospital", "funeral", "apartment", "courthouse", "station", "cemetery", "hallway", "factory", "village"],
        moods: &["somber", "poignant", "emotional", "melancholic", "raw", "solemn", "bittersweet", "intense", "restrained", "sorrowful"],
    },
];

pub const SHOTS: &[&str] = &[
    "portrait", "closeup", "silhouette", "montage", "panorama", "tableau", "snapshot", "still", "illustration", "composite",
];

pub const PALETTES: &[&str] = &[
    "amber", "teal", "crimson", "golden", "silver", "violet", "cobalt", "scarlet", "emerald", "ivory",
];

pub const TITLE_ADJECTIVES: &[&str] = &[
    "Silent", "Broken", "Hidden", "Last", "Distant", "Burning", "Hollow", "Endless", "Forgotten", "Northern",
    "Paper", "Glass", "Iron", "Velvet", "Wild", "Quiet", "Second", "Falling", "Open", "Lost",
];

pub const TITLE_NOUNS: &[&str] = &[
    "Horizon", "River", "Promise", "Kingdom", "Signal", "Winter", "Echo", "Passage", "Letters", "Season",
    "Shore", "Crown", "Road", "Compass", "Bridge", "Tide", "Summit", "Voyage", "Harvest", "Frontier",
];

/// Sentence templates; `{s}` subject, `{v}` verb, `{p}` place, `{m}` mood,
/// `{c}` palette, `{g}` genre, `{k}` shot.
pub const SENTENCES: &[&str] = &[
    "The {k} frames a {s} who {v} across the {p}, bathed in {c} light that feels {m}.",
    "Up front a {s} {v} near the {p} while the {c} background stays {m} and quiet.",
    "In the foreground the {s} {v}, and behind the figure the {p} fades into {c} haze with a {m} edge.",
    "This {g} leaning composition keeps the {s} at the center, caught as it {v} while the {p} glows {c}.",
    "Small details reward a second look as the {s} {v} beside the {p}, giving the image a {m} tone.",
    "A {m} mood runs through the {k}, where a lone {s} {v} under {c} skies above the {p}.",
    "Texture and contrast pull the eye toward the {p}, where the {s} {v} in a {m} {g} beat.",
    "Soft {c} gradients surround the {s} as it {v}, and the {p} sets a {m} stage for the scene.",
];

/// Index of the theme owning `word`, if any.
pub fn theme_of(word: &str) -> Option<usize> {
    THEMES.iter().position(|t| t.words().any(|w| w == word))
}
