//! Built-in fixture suite: five mock shopping/travel/video apps with twenty
//! tasks each, plus the mis-tap-then-recover transcript.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{AppScript, Element, ElementKind, GuideStep, Predicate, Screen, Target, TaskSpec, Transition, Trigger};
use super::{DEFAULT_MAX_STEPS, SCRIPT_FORMAT_VERSION};
use crate::protocol::{Action, ScreenSize, SystemButton};
use crate::reward::{BBox, Direction, GroundTruthStep};

pub const APP_COUNT: usize = 5;
pub const TASKS_PER_APP: usize = 20;
pub const SCREEN: ScreenSize = ScreenSize::new(1080, 2400);

const CATEGORIES: usize = 6;
const ITEMS: usize = 4;

struct AppTheme {
    name: &'static str,
    categories: [&'static str; CATEGORIES],
    queries: [&'static str; 4],
}

const THEMES: [AppTheme; APP_COUNT] = [
    AppTheme {
        name: "MallGo",
        categories: ["Phones", "Laptops", "Audio", "Cameras", "Watches", "Tablets"],
        queries: ["iPhone 16 Pro Max", "usb c cable", "noise cancelling headphones", "mechanical keyboard"],
    },
    AppTheme {
        name: "BargainHub",
        categories: ["Snacks", "Kitchen", "Cleaning", "Pets", "Toys", "Garden"],
        queries: ["paper towels", "cat litter", "instant noodles", "dish soap"],
    },
    AppTheme {
        name: "MarketPlus",
        categories: ["Shoes", "Jackets", "Bags", "Jeans", "Hats", "Sportswear"],
        queries: ["running shoes", "rain jacket", "leather wallet", "wool scarf"],
    },
    AppTheme {
        name: "TripNest",
        categories: ["Hotels", "Flights", "Trains", "Tickets", "Cruises", "Visas"],
        queries: ["hotel near west lake", "flight to chengdu", "high speed rail", "museum pass"],
    },
    AppTheme {
        name: "ClipTV",
        categories: ["Anime", "Games", "Music", "Science", "Food", "Travel"],
        queries: ["speedrun", "piano cover", "street food", "space documentary"],
    },
];

fn bbox(x1: u32, y1: u32, x2: u32, y2: u32) -> BBox {
    BBox { x1, y1, x2, y2 }
}

fn el(id: &str, bbox: BBox, label: &str, kind: ElementKind) -> Element {
    Element { id: id.into(), bbox, label: label.into(), kind }
}

fn list_row(i: usize) -> BBox {
    let y = 400 + 220 * i as u32;
    bbox(40, y, 1040, y + 180)
}

fn screen(id: &str, elements: Vec<Element>) -> Screen {
    Screen { id: id.into(), size: SCREEN, elements }
}

fn icon_slot(slot: usize) -> BBox {
    let (col, row) = ((slot % 4) as u32, (slot / 4) as u32);
    let x = 60 + 250 * col;
    let y = 300 + 300 * row;
    bbox(x, y, x + 200, y + 200)
}

const SEARCH_ENTRY: BBox = BBox { x1: 40, y1: 150, x2: 1040, y2: 270 };
const QUERY_BOX: BBox = BBox { x1: 40, y1: 150, x2: 860, y2: 270 };
const SEARCH_GO: BBox = BBox { x1: 880, y1: 150, x2: 1040, y2: 270 };
const FOLLOW: BBox = BBox { x1: 40, y1: 2000, x2: 520, y2: 2160 };
const ADD_CART: BBox = BBox { x1: 560, y1: 2000, x2: 1040, y2: 2160 };
const PHOTO: BBox = BBox { x1: 40, y1: 400, x2: 1040, y2: 1400 };
/// Region where feed-opening swipes start on the main screen.
const SWIPE_AREA: BBox = BBox { x1: 40, y1: 700, x2: 1040, y2: 1900 };

fn tab(i: u32) -> BBox {
    bbox(360 * i, 2200, 360 * i + 359, 2380)
}

fn detail_id(cat: usize, item: usize) -> String {
    format!("detail_{cat}_{item}")
}

fn item_name(theme: &AppTheme, cat: usize, item: usize) -> String {
    format!("{} item {}", theme.categories[cat], item + 1)
}

fn tap(from: &str, element: &str, to: &str) -> Transition {
    Transition {
        from: from.into(),
        trigger: Trigger::Tap { element: element.into() },
        to: Target { screen: to.into(), set_flags: Vec::new(), focus: None },
    }
}

/// Screen graph of fixture app `index` (0..APP_COUNT).
pub fn app_script(index: usize) -> AppScript {
    let theme = &THEMES[index];
    let mut screens = Vec::new();
    let mut transitions = Vec::new();

    let decoys = ["Camera", "Clock", "Gallery", "Settings"];
    let app_slot = (index * 3 + 1) % 8;
    let mut home = vec![el("app_icon", icon_slot(app_slot), theme.name, ElementKind::Icon)];
    let mut slot = 0;
    for name in decoys {
        if slot == app_slot {
            slot += 1;
        }
        home.push(el(&name.to_lowercase(), icon_slot(slot), name, ElementKind::Icon));
        slot += 1;
    }
    screens.push(screen("home", home));
    transitions.push(tap("home", "app_icon", "main"));

    let mut main = vec![el("search_entry", SEARCH_ENTRY, "Search", ElementKind::Button)];
    for (i, cat) in theme.categories.iter().enumerate() {
        main.push(el(&format!("cat_{i}"), list_row(i), cat, ElementKind::ListItem));
        transitions.push(tap("main", &format!("cat_{i}"), &format!("cat_{i}")));
    }
    main.push(el("tab_home", tab(0), "Home", ElementKind::Tab));
    main.push(el("tab_feed", tab(1), "Feed", ElementKind::Tab));
    main.push(el("tab_profile", tab(2), "Me", ElementKind::Tab));
    screens.push(screen("main", main));
    transitions.push(Transition {
        from: "main".into(),
        trigger: Trigger::Tap { element: "search_entry".into() },
        to: Target { screen: "search".into(), set_flags: Vec::new(), focus: Some("query".into()) },
    });
    transitions.push(tap("main", "tab_feed", "feed"));
    transitions.push(tap("main", "tab_profile", "profile"));
    transitions.push(Transition {
        from: "main".into(),
        trigger: Trigger::Swipe { direction: Direction::Up },
        to: Target { screen: "feed".into(), set_flags: Vec::new(), focus: None },
    });

    screens.push(screen(
        "search",
        vec![
            el("query", QUERY_BOX, "Search products", ElementKind::Input),
            el("search_go", SEARCH_GO, "Go", ElementKind::Button),
        ],
    ));
    transitions.push(tap("search", "search_go", "results"));

    let mut results = Vec::new();
    for k in 0..ITEMS {
        results.push(el(&format!("res_{k}"), list_row(k), &item_name(theme, 0, k), ElementKind::ListItem));
        transitions.push(tap("results", &format!("res_{k}"), &detail_id(0, k)));
    }
    screens.push(screen("results", results));

    for c in 0..CATEGORIES {
        let id = format!("cat_{c}");
        let mut items = Vec::new();
        for j in 0..ITEMS {
            items.push(el(&format!("item_{c}_{j}"), list_row(j), &item_name(theme, c, j), ElementKind::ListItem));
            transitions.push(tap(&id, &format!("item_{c}_{j}"), &detail_id(c, j)));
        }
        screens.push(screen(&id, items));
    }

    for c in 0..CATEGORIES {
        for j in 0..ITEMS {
            let id = detail_id(c, j);
            screens.push(screen(
                &id,
                vec![
                    el("photo", PHOTO, &item_name(theme, c, j), ElementKind::Icon),
                    el("follow", FOLLOW, "Follow", ElementKind::Button),
                    el("add_cart", ADD_CART, "Add to cart", ElementKind::Button),
                ],
            ));
            for (element, flag, long) in [
                ("follow", format!("followed:{c}_{j}"), false),
                ("add_cart", format!("cart:{c}_{j}"), false),
                ("photo", format!("saved:{c}_{j}"), true),
            ] {
                let trigger = if long {
                    Trigger::LongPress { element: element.into() }
                } else {
                    Trigger::Tap { element: element.into() }
                };
                transitions.push(Transition {
                    from: id.clone(),
                    trigger,
                    to: Target { screen: id.clone(), set_flags: vec![flag], focus: None },
                });
            }
        }
    }

    let sections = ["following", "orders", "settings"];
    screens.push(screen(
        "profile",
        sections.iter().enumerate().map(|(i, s)| el(s, list_row(i), s, ElementKind::ListItem)).collect(),
    ));
    for s in sections {
        transitions.push(tap("profile", s, s));
        screens.push(screen(s, vec![el("title", bbox(40, 300, 1040, 400), s, ElementKind::Button)]));
    }

    let mut feed = Vec::new();
    for k in 0..ITEMS {
        let target = ((k + 1) % CATEGORIES, k);
        feed.push(el(&format!("feed_{k}"), list_row(k), &item_name(theme, target.0, target.1), ElementKind::ListItem));
        transitions.push(tap("feed", &format!("feed_{k}"), &detail_id(target.0, target.1)));
    }
    screens.push(screen("feed", feed));

    AppScript {
        format_version: SCRIPT_FORMAT_VERSION,
        app: theme.name.into(),
        initial_screen: "home".into(),
        screens,
        transitions,
    }
}

fn elem_box(script: &AppScript, screen: &str, element: &str) -> BBox {
    script
        .screen(screen)
        .and_then(|s| s.element(element))
        .map(|e| e.bbox)
        .unwrap_or_else(|| panic!("fixture references {screen}/{element}"))
}

fn click(script: &AppScript, screen: &str, element: &str) -> GuideStep {
    GuideStep { screen: screen.into(), expect: GroundTruthStep::click(elem_box(script, screen, element)) }
}

/// Task `k` (0..TASKS_PER_APP) of app `index`.
pub fn task(script: &AppScript, index: usize, k: usize) -> TaskSpec {
    let theme = &THEMES[index];
    let open = click(script, "home", "app_icon");
    let (instruction, guide, success) = match k {
        0..=5 => (
            format!("Open {} and browse the {} category", theme.name, theme.categories[k]),
            vec![open, click(script, "main", &format!("cat_{k}"))],
            Predicate::ReachedScreen { screen: format!("cat_{k}") },
        ),
        6..=9 => {
            let q = theme.queries[k - 6];
            (
                format!("Open {}, search for \"{q}\" and show the results", theme.name),
                vec![
                    open,
                    click(script, "main", "search_entry"),
                    GuideStep { screen: "search".into(), expect: GroundTruthStep::typed(q) },
                    click(script, "search", "search_go"),
                ],
                Predicate::All {
                    of: vec![
                        Predicate::ReachedScreen { screen: "results".into() },
                        Predicate::TypedText { element: "query".into(), text: q.into() },
                    ],
                },
            )
        }
        10..=15 => {
            let (c, j) = (k - 10, k % ITEMS);
            (
                format!("Open {}, find {} and follow it", theme.name, item_name(theme, c, j)),
                vec![
                    open,
                    click(script, "main", &format!("cat_{c}")),
                    click(script, &format!("cat_{c}"), &format!("item_{c}_{j}")),
                    click(script, &detail_id(c, j), "follow"),
                ],
                Predicate::Flag { flag: format!("followed:{c}_{j}") },
            )
        }
        16 | 17 => {
            let section = if k == 16 { "following" } else { "orders" };
            (
                format!("Open {} and view my {section}", theme.name),
                vec![open, click(script, "main", "tab_profile"), click(script, "profile", section)],
                Predicate::ReachedScreen { screen: section.into() },
            )
        }
        _ => {
            let f = k - 18;
            let (c, j) = ((f + 1) % CATEGORIES, f);
            let mut guide = vec![
                open,
                GuideStep { screen: "main".into(), expect: GroundTruthStep::swipe(SWIPE_AREA, Direction::Up) },
                click(script, "feed", &format!("feed_{f}")),
            ];
            let success = if k == 18 {
                Predicate::ReachedScreen { screen: detail_id(c, j) }
            } else {
                guide.push(GuideStep {
                    screen: detail_id(c, j),
                    expect: GroundTruthStep::long_press(elem_box(script, &detail_id(c, j), "photo")),
                });
                Predicate::Flag { flag: format!("saved:{c}_{j}") }
            };
            let verb = if k == 18 { "open" } else { "save the photo of" };
            (format!("Open {}, scroll the feed and {verb} {}", theme.name, item_name(theme, c, j)), guide, success)
        }
    };
    TaskSpec {
        format_version: SCRIPT_FORMAT_VERSION,
        task_id: format!("{}-{k:02}", theme.name.to_lowercase()),
        app: theme.name.into(),
        instruction,
        success,
        max_steps: DEFAULT_MAX_STEPS,
        guide,
    }
}

/// One app script with its tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureApp {
    pub script: AppScript,
    pub tasks: Vec<TaskSpec>,
}

/// The full 5 x 20 suite.
pub fn suite() -> Vec<FixtureApp> {
    (0..APP_COUNT)
        .map(|a| {
            let script = app_script(a);
            let tasks = (0..TASKS_PER_APP).map(|k| task(&script, a, k)).collect();
            FixtureApp { script, tasks }
        })
        .collect()
}

/// Index of the four-screen search task (home, main, search, results) of app 0.
pub const FOUR_SCREEN_TASK: usize = 6;

/// Browse-category task of app 0 plus a transcript that first opens the wrong
/// category, backs out, then opens the right one.
pub fn mistap_recovery() -> (AppScript, TaskSpec, Vec<Action>) {
    let script = app_script(0);
    let task = task(&script, 0, 2);
    let center = |screen: &str, element: &str| {
        let c = elem_box(&script, screen, element).center();
        Action::click(c.x, c.y)
    };
    let transcript = vec![
        center("home", "app_icon"),
        center("main", "cat_1"),
        Action::SystemButton { button: SystemButton::Back },
        center("main", "cat_2"),
    ];
    (script, task, transcript)
}

/// Distinct app names in suite order.
pub fn app_names() -> Vec<String> {
    THEMES.iter().map(|t| t.name.to_string()).collect()
}
