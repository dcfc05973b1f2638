//! Word pools and product kinds for the synthetic catalog.

use crate::corpus::UomType;

use super::Locale;

/// Per-locale word lists, indexed `[us, eu5, in]`.
pub(crate) type Pools = [&'static [&'static str]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Scale {
    Small,
    Regular,
}

/// A product family with a fixed UoM type and category path.
#[derive(Debug)]
pub(crate) struct ProductKind {
    pub key: &'static str,
    pub uom: UomType,
    /// Category, browse node and sub-category identifiers.
    pub path: [&'static str; 3],
    pub nouns: Pools,
    pub count_units: &'static [&'static str],
    pub scale: Scale,
}

impl ProductKind {
    pub fn nouns(&self, locale: Locale) -> &'static [&'static str] {
        self.nouns[locale.index()]
    }
}

const COMPACT_NOUNS: Pools = [
    &["Pressed Powder Compact", "Matte Finish Compact", "Silk Glow Compact", "Velvet Touch Compact"],
    &["Poudre Compacte Matifiante", "Cipria Compatta Luminosa", "Kompaktpuder Seidig", "Polvo Compacto Mate"],
    &["Pressed Powder Compact", "Matte Finish Compact", "Kesar Glow Compact", "Silk Glow Compact"],
];

pub(crate) const KINDS: &[ProductKind] = &[
    ProductKind {
        key: "face_powder",
        uom: UomType::Weight,
        path: ["cat-a", "cat-a/face-powder", "cat-a/face-powder/pressed"],
        nouns: COMPACT_NOUNS,
        count_units: &[],
        scale: Scale::Small,
    },
    ProductKind {
        key: "blushes",
        uom: UomType::Count,
        path: ["cat-a", "cat-a/blushes", "cat-a/blushes/pressed"],
        nouns: COMPACT_NOUNS,
        count_units: &["Pcs"],
        scale: Scale::Small,
    },
    ProductKind {
        key: "brushes",
        uom: UomType::Count,
        path: ["cat-a", "cat-a/tools", "cat-a/tools/brushes"],
        nouns: [
            &["Makeup Brush Set", "Detangling Hair Brush", "Nail Clipper Kit", "Beauty Sponge Blender"],
            &["Pinceau Maquillage Kabuki", "Brosse à Cheveux Démêlante", "Spazzola Districante", "Schminkpinsel Set"],
            &["Wooden Kangi Comb", "Kajal Pencil", "Nail Clipper Kit", "Jute Loofah Scrubber"],
        ],
        count_units: &["Pcs", "Pieces", "Count"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "gift_set",
        uom: UomType::Count,
        path: ["cat-a", "cat-a/gift-sets", "cat-a/gift-sets/skincare"],
        nouns: [
            &["Skincare Gift Set", "Fragrance Gift Box", "Spa Hamper"],
            &["Coffret Cadeau Soin", "Cofanetto Regalo Bellezza", "Geschenkset Pflege"],
            &["Ubtan Gift Hamper", "Festive Skincare Kit", "Chandan Gift Box"],
        ],
        count_units: &["Pcs"],
        scale: Scale::Small,
    },
    ProductKind {
        key: "soap",
        uom: UomType::Count,
        path: ["cat-a", "cat-a/bath", "cat-a/bath/soap-bars"],
        nouns: [
            &["Beauty Bar Soap", "Moisturizing Soap Bar", "Oatmeal Soap"],
            &["Savon de Marseille", "Savon Surgras Douceur", "Sapone Vegetale"],
            &["Neem Tulsi Soap", "Sandal Haldi Soap", "Ayurvedic Bathing Bar"],
        ],
        count_units: &["Pcs", "Count"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "shampoo",
        uom: UomType::Volume,
        path: ["cat-a", "cat-a/hair-care", "cat-a/hair-care/shampoo"],
        nouns: [
            &["Daily Moisture Shampoo", "Anti Dandruff Shampoo", "Repair Conditioner", "Argan Hair Oil"],
            &["Shampooing Doux", "Après-Shampooing Nutrition", "Champú Anticaspa", "Spülung Glanz"],
            &["Amla Hair Oil", "Shikakai Shampoo", "Bhringraj Hair Tonic", "Onion Hair Oil"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "lotion",
        uom: UomType::Volume,
        path: ["cat-a", "cat-a/skin-care", "cat-a/skin-care/body"],
        nouns: [
            &["Body Lotion", "Micellar Cleansing Water", "Shower Gel", "Face Toner"],
            &["Lait Corporel Hydratant", "Eau Micellaire", "Gel Douche Crème", "Lozione Corpo"],
            &["Aloe Vera Body Lotion", "Rose Water Toner", "Kesar Chandan Face Wash", "Body Wash"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "vitamins",
        uom: UomType::Count,
        path: ["cat-b", "cat-b/supplements", "cat-b/supplements/vitamins"],
        nouns: [
            &["Vitamin C Supplement", "Multivitamin for Men", "Fish Oil Softgels", "Zinc Immune Support"],
            &["Vitamine C Effervescente", "Magnésium Marin", "Integratore Multivitaminico", "Vitamin D3 Depot"],
            &["Ashwagandha Extract", "Giloy Ghanvati", "Shilajit Resin", "Triphala Guggul"],
        ],
        count_units: &["Tablets", "Capsules", "Count"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "bandages",
        uom: UomType::Count,
        path: ["cat-b", "cat-b/first-aid", "cat-b/first-aid/bandages"],
        nouns: [
            &["Adhesive Bandages", "Cotton Swabs", "Disposable Face Masks", "Alcohol Prep Pads"],
            &["Pansements Adhésifs", "Cotons-Tiges Bio", "Mascherine Chirurgiche", "Wundpflaster Sensitiv"],
            &["Cotton Balls", "Surgical Face Masks", "Crepe Bandage Roll", "Antiseptic Strips"],
        ],
        count_units: &["Count", "ct", "Pcs"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "protein",
        uom: UomType::Weight,
        path: ["cat-b", "cat-b/sports-nutrition", "cat-b/sports-nutrition/powder"],
        nouns: [
            &["Whey Protein Powder", "Creatine Monohydrate Micronized", "Plant Protein Blend", "Mass Gainer"],
            &["Protéine Whey Isolat", "Créatine Monohydrate", "Proteine Vegetali", "Eiweißpulver Vanille"],
            &["Whey Protein Isolate", "Creatine Monohydrate", "Soya Chunks Protein", "Sattu Protein Mix"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "churan",
        uom: UomType::Weight,
        path: ["cat-b", "cat-b/ayurveda", "cat-b/ayurveda/churna"],
        nouns: [
            &["Herbal Digestive Powder", "Psyllium Husk Powder", "Turmeric Root Powder"],
            &["Poudre de Curcuma Bio", "Psyllium Blond", "Polvere di Curcuma"],
            &["Panchkol Churan", "Triphala Churna", "Hingvastak Churna", "Isabgol Husk"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "sanitizer",
        uom: UomType::Volume,
        path: ["cat-b", "cat-b/hygiene", "cat-b/hygiene/sanitizer"],
        nouns: [
            &["Advanced Hand Sanitizer", "Antiseptic Mouthwash", "Disinfectant Liquid"],
            &["Gel Hydroalcoolique", "Bain de Bouche", "Igienizzante Mani", "Desinfektionsmittel"],
            &["Hand Sanitizer Gel", "Antiseptic Liquid", "Neem Mouthwash"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "coffee",
        uom: UomType::Weight,
        path: ["cat-c", "cat-c/coffee", "cat-c/coffee/ground"],
        nouns: [
            &["Original Roast Ground Coffee", "Medium Roast Coffee Beans", "Green Tea Leaves", "Breakfast Blend Coffee"],
            &["Café Moulu Pur Arabica", "Caffè Macinato Crema", "Thé Vert Sencha", "Kaffeebohnen Crema"],
            &["Filter Coffee Powder", "Assam Tea Leaves", "Masala Chai Patti", "Instant Coffee Jar"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "staples",
        uom: UomType::Weight,
        path: ["cat-c", "cat-c/staples", "cat-c/staples/grains"],
        nouns: [
            &["Long Grain White Rice", "All Purpose Flour", "Rolled Oats", "Granulated Sugar"],
            &["Pâtes Complètes", "Riz Basmati", "Farina di Grano Tenero", "Haferflocken Zart"],
            &["Whole Wheat Atta", "Basmati Rice", "Chana Dal", "Besan Flour", "Sona Masoori Rice"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "ghee_honey",
        uom: UomType::Weight,
        path: ["cat-c", "cat-c/spreads", "cat-c/spreads/honey-ghee"],
        nouns: [
            &["Pure Raw Honey", "Clarified Butter Ghee", "Creamy Peanut Butter"],
            &["Miel de Fleurs", "Miele Millefiori", "Beurre Clarifié", "Crème de Marrons"],
            &["Desi Cow Ghee", "Pure Honey", "Danedar Ghee", "Shahad Honey"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "oil_juice",
        uom: UomType::Volume,
        path: ["cat-c", "cat-c/beverages-oils", "cat-c/beverages-oils/bottled"],
        nouns: [
            &["Extra Virgin Olive Oil", "Orange Juice", "Sparkling Water", "Cold Brew Coffee Drink"],
            &["Huile d'Olive Vierge Extra", "Jus d'Orange Pressé", "Acqua Frizzante", "Apfelsaft Naturtrüb"],
            &["Kachi Ghani Mustard Oil", "Sunflower Oil", "Mango Frooti Drink", "Rooh Afza Sharbat"],
        ],
        count_units: &[],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "kcup",
        uom: UomType::Count,
        path: ["cat-c", "cat-c/coffee", "cat-c/coffee/pods"],
        nouns: [
            &["Original Roast Coffee K-Cup Pods", "Dark Roast Coffee Pods", "Hot Cocoa K-Cups"],
            &["Dosettes de Café Corsé", "Cialde Caffè Espresso", "Kaffeepads Klassisch"],
            &["Filter Coffee Pods", "Instant Coffee Sachets", "Green Tea Bags"],
        ],
        count_units: &["ct", "Count", "Pods"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "incense",
        uom: UomType::Count,
        path: ["cat-c", "cat-c/pooja", "cat-c/pooja/incense"],
        nouns: [
            &["Incense Sticks", "Scented Tea Lights", "Wax Melt Cubes"],
            &["Bâtonnets d'Encens", "Bougies Parfumées", "Candele Profumate"],
            &["Agarbatti Incense Sticks", "Dhoop Batti Cones", "Camphor Kapoor Tablets"],
        ],
        count_units: &["Pcs", "Count", "Pieces"],
        scale: Scale::Regular,
    },
    ProductKind {
        key: "containers",
        uom: UomType::Count,
        path: ["cat-c", "cat-c/kitchen", "cat-c/kitchen/storage"],
        nouns: [
            &["Insulated Water Bottle", "Glass Storage Jar", "Leakproof Lunch Box", "Measuring Jug"],
            &["Gourde Isotherme Inox", "Bocal en Verre", "Borraccia Termica", "Brotdose Edelstahl"],
            &["Steel Water Bottle", "Tiffin Box", "Masala Dabba", "Milton Casserole"],
        ],
        count_units: &["Pcs"],
        scale: Scale::Regular,
    },
];

pub(crate) fn kind(key: &str) -> &'static ProductKind {
    KINDS
        .iter()
        .find(|k| k.key == key)
        .unwrap_or_else(|| panic!("unknown product kind `{}`", key))
}

pub(crate) const BRANDS: Pools = [
    &["Maxwell House", "Kirkland", "Nature Valley", "Purell", "Folgers", "Quaker", "Olay", "Cetaphil", "Nature Made", "Band-Aid", "Glad", "Zevia"],
    &["Nestlé", "Lavazza", "Bonne Maman", "Danone", "Nivea", "Garnier", "Müller", "Carte Noire", "Émile Noël", "Señorío", "Barilla", "Weleda"],
    &["Patanjali", "Tansukh", "Niconi", "Aashirvaad", "Dabur", "Himalaya", "Amul", "Tata Sampann", "Fortune", "Baidyanath", "Zandu", "Nutratech"],
];

pub(crate) const ADJECTIVES: Pools = [
    &["Original", "Caffeinated", "Unscented", "Organic", "Lemon", "Vanilla", "Blueberry Flavor", "Extra Strength", "Family Size", "Classic"],
    &["Bio", "Arôme Vanille", "Goût Intense", "Sans Sucre", "Délicat", "Crème Brûlée", "Naturale", "Zitrone", "Intenso", "Fraîcheur"],
    &["Premium", "Pure", "Masala", "Kesar Elaichi", "Desi", "Ayurvedic", "Haldi Chandan", "Tulsi", "Herbal", "Classic"],
];

pub(crate) const DISTRACTOR_PHRASES: &[(&str, &str)] = &[
    ("", " Hour Germ Protection"),
    ("SPF ", ""),
    ("", " Thread Count"),
    ("", "% Natural"),
    ("Stage ", ""),
    ("Size ", ""),
    ("", "% Germ Kill"),
    ("Edition ", ""),
];

pub(crate) const DISTRACTOR_VALUES: &[&[f64]] = &[
    &[8.0, 12.0, 24.0, 48.0],
    &[15.0, 30.0, 50.0],
    &[300.0, 400.0, 600.0],
    &[100.0, 95.0],
    &[2.0, 3.0, 4.0],
    &[3.0, 4.0, 5.0, 6.0],
    &[99.9],
    &[2019.0, 2021.0, 2023.0],
];

pub(crate) const PACK_OF: Pools = [&["Pack of"], &["Lot de", "Pack de", "Confezione da"], &["Pack of", "Combo of"]];

pub(crate) const DESCRIPTIONS: Pools = [
    &[
        "Made with carefully selected ingredients for everyday use.",
        "A customer favourite with a smooth, balanced finish.",
        "Store in a cool, dry place away from direct sunlight.",
        "Dermatologist tested and gentle on sensitive skin.",
        "Great value for the whole family.",
    ],
    &[
        "Fabriqué en France avec des ingrédients sélectionnés.",
        "Conservare in luogo fresco e asciutto.",
        "Qualité supérieure, goût authentique.",
        "Für die ganze Familie geeignet.",
        "Elaborado con ingredientes naturales.",
    ],
    &[
        "Made with traditional ayurvedic recipes.",
        "Pure and natural, no added preservatives.",
        "Ideal for daily pooja and festive occasions.",
        "Trusted by Indian households for generations.",
        "Keep in a cool and dry place.",
    ],
];

/// Weight unit choices per locale and scale: `(unit, values)`.
pub(crate) fn weight_units(locale: Locale, scale: Scale) -> &'static [(&'static str, &'static [f64])] {
    match (locale, scale) {
        (Locale::Us, Scale::Small) => &[("oz", &[0.15, 0.28, 0.32, 0.35]), ("g", &[4.5, 8.0, 9.0, 10.0, 12.0])],
        (Locale::Eu5, Scale::Small) => &[("g", &[4.5, 7.0, 8.0, 9.0, 10.0, 12.0])],
        (Locale::In, Scale::Small) => &[("g", &[4.5, 8.0, 9.0, 12.0]), ("gm", &[7.0, 9.0, 10.0])],
        (Locale::Us, Scale::Regular) => &[
            ("oz", &[1.75, 3.5, 6.0, 8.0, 8.3, 10.0, 12.0, 12.5, 16.0, 28.0, 32.0, 42.5]),
            ("lb", &[2.0, 3.0, 5.0, 10.0]),
            ("g", &[100.0, 200.0, 250.0, 454.0]),
        ],
        (Locale::Eu5, Scale::Regular) => &[
            ("g", &[100.0, 125.0, 150.0, 200.0, 250.0, 300.0, 400.0, 500.0, 750.0]),
            ("kg", &[0.5, 1.5, 2.0, 2.5, 5.0]),
        ],
        (Locale::In, Scale::Regular) => &[
            ("gm", &[50.0, 100.0, 120.0, 200.0, 250.0, 400.0, 500.0, 800.0]),
            ("g", &[60.0, 100.0, 150.0, 200.0, 500.0]),
            ("grm", &[100.0, 200.0, 250.0]),
            ("kg", &[2.0, 5.0, 10.0]),
        ],
    }
}

pub(crate) fn volume_units(locale: Locale) -> &'static [(&'static str, &'static [f64])] {
    match locale {
        Locale::Us => &[
            ("fl oz", &[8.0, 12.0, 16.0, 20.0, 33.8, 64.0]),
            ("ml", &[100.0, 250.0, 355.0, 500.0, 750.0]),
            ("gallon", &[2.0, 5.0]),
        ],
        Locale::Eu5 => &[
            ("ml", &[50.0, 100.0, 200.0, 250.0, 300.0, 400.0, 500.0, 750.0]),
            ("cl", &[25.0, 33.0, 50.0, 75.0]),
            ("l", &[0.5, 1.5, 2.0]),
        ],
        Locale::In => &[
            ("ml", &[100.0, 150.0, 200.0, 250.0, 500.0]),
            ("ltr", &[2.0, 5.0]),
            ("l", &[1.5, 2.0]),
        ],
    }
}

pub(crate) const COUNT_VALUES: &[f64] = &[
    6.0, 10.0, 12.0, 18.0, 20.0, 24.0, 30.0, 36.0, 40.0, 48.0, 50.0, 60.0, 72.0, 90.0, 100.0, 120.0,
];
pub(crate) const PACK_VALUES: &[f64] = &[2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0];
pub(crate) const CONCENTRATIONS: &[f64] = &[250.0, 500.0, 1000.0, 5000.0];
