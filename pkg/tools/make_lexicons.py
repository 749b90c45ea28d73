"""Writes the bundled stand-in lexicon files under src/gem/data/.

Run from the repo root: python3 tools/make_lexicons.py
"""

from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "gem" / "data"

CVD_TERMS = [
    # conditions
    "heart attack", "heart attacks", "myocardial infarction", "stemi", "nstemi",
    "cardiac arrest", "sudden cardiac arrest", "sudden cardiac death",
    "coronary artery disease", "coronary heart disease", "congestive heart failure",
    "heart failure", "heart disease", "cardiovascular disease", "ischemic heart disease",
    "cardiomyopathy", "dilated cardiomyopathy", "hypertrophic cardiomyopathy",
    "stress cardiomyopathy", "takotsubo", "broken heart syndrome",
    "myocarditis", "pericarditis", "endocarditis", "rheumatic heart disease",
    "rheumatic fever", "kawasaki disease", "cardiomegaly", "enlarged heart",
    "left ventricular hypertrophy", "diastolic dysfunction", "systolic dysfunction",
    "reduced ejection fraction", "preserved ejection fraction", "cor pulmonale",
    "arrhythmia", "arrhythmias", "atrial fibrillation", "afib", "atrial flutter",
    "tachycardia", "bradycardia", "supraventricular tachycardia", "svt",
    "ventricular tachycardia", "vtach", "ventricular fibrillation", "vfib",
    "premature ventricular contraction", "pvc", "premature atrial contraction",
    "heart block", "bundle branch block", "sick sinus syndrome", "long qt",
    "qt prolongation", "wolff parkinson white", "brugada syndrome", "sinus arrhythmia",
    "angina", "unstable angina", "stable angina", "variant angina", "microvascular angina",
    "hypertension", "high blood pressure", "hypertensive crisis", "pulmonary hypertension",
    "hypotension", "orthostatic hypotension", "low blood pressure",
    "atherosclerosis", "arteriosclerosis", "plaque buildup", "clogged arteries",
    "blocked artery", "artery blockage", "carotid artery disease", "carotid stenosis",
    "peripheral artery disease", "claudication", "aortic aneurysm", "aneurysm",
    "aortic dissection", "aortic stenosis", "aortic regurgitation", "mitral stenosis",
    "mitral regurgitation", "mitral valve prolapse", "tricuspid regurgitation",
    "valve disease", "leaky valve", "heart murmur", "septal defect",
    "atrial septal defect", "ventricular septal defect", "patent foramen ovale", "pfo",
    "congenital heart defect", "congenital heart disease", "marfan syndrome",
    "stroke", "ministroke", "transient ischemic attack", "tia", "blood clot",
    "thrombosis", "deep vein thrombosis", "dvt", "pulmonary embolism", "embolism",
    "high cholesterol", "hyperlipidemia", "dyslipidemia", "metabolic syndrome",
    # symptoms and signs
    "chest pain", "chest pains", "chest tightness", "chest pressure", "chest discomfort",
    "shortness of breath", "dyspnea", "orthopnea", "palpitations", "heart palpitations",
    "racing heart", "heart racing", "pounding heart", "skipped beats", "skipping beats",
    "fluttering in my chest", "irregular heartbeat", "rapid heartbeat", "slow heartbeat",
    "lightheaded", "lightheadedness", "dizzy spells", "fainting", "syncope", "presyncope",
    "swollen ankles", "leg swelling", "fluid retention", "edema", "pitting edema",
    "radiating arm pain", "left arm pain", "jaw pain with exertion", "exertional chest pain",
    "fatigue on exertion", "cyanosis", "cold sweats with chest pain",
    # procedures and devices
    "cabg", "coronary artery bypass graft", "bypass surgery", "triple bypass",
    "quadruple bypass", "open heart surgery", "heart surgery", "valve replacement",
    "valve repair", "tavr", "transcatheter aortic valve replacement", "maze procedure",
    "watchman device", "angioplasty", "stent", "stents", "stent placement",
    "drug eluting stent", "cardiac catheterization", "heart cath", "cath lab",
    "percutaneous coronary intervention", "pci", "coronary angiography", "angiogram",
    "ct angiogram", "calcium score", "cardiac ablation", "ablation", "cardioversion",
    "pacemaker", "defibrillator", "icd implant", "implantable cardioverter defibrillator",
    "loop recorder", "event monitor", "holter monitor", "telemetry", "stress test",
    "treadmill test", "nuclear stress test", "tilt table test", "echocardiogram", "echo",
    "transesophageal echocardiogram", "ekg", "ecg", "electrocardiogram", "cardiac mri",
    "lipid panel", "troponin", "cardiac enzymes", "bnp", "d dimer", "ejection fraction",
    "heart transplant", "lvad", "left ventricular assist device", "impella",
    "balloon pump", "intra aortic balloon pump", "ecmo", "cpr", "aed",
    "cardiac rehab", "cardiac rehabilitation", "swan ganz catheter",
    # anatomy
    "myocardium", "pericardium", "endocardium", "left ventricle", "right ventricle",
    "left atrium", "right atrium", "aorta", "aortic valve", "mitral valve",
    "tricuspid valve", "pulmonic valve", "coronary arteries", "left anterior descending",
    "left main artery", "right coronary artery", "circumflex artery", "widowmaker",
    "sinoatrial node", "sinus node", "av node", "atrioventricular node", "purkinje fibers",
    "carotid artery", "femoral artery",
    # medications and management
    "beta blocker", "beta blockers", "metoprolol", "atenolol", "carvedilol", "bisoprolol",
    "propranolol", "ace inhibitor", "lisinopril", "enalapril", "ramipril", "losartan",
    "valsartan", "arb", "calcium channel blocker", "amlodipine", "diltiazem", "verapamil",
    "statin", "statins", "atorvastatin", "simvastatin", "rosuvastatin", "ezetimibe",
    "blood thinner", "blood thinners", "anticoagulant", "warfarin", "coumadin",
    "eliquis", "apixaban", "xarelto", "rivaroxaban", "clopidogrel", "plavix",
    "aspirin therapy", "nitroglycerin", "nitrates", "digoxin", "amiodarone",
    "furosemide", "lasix", "spironolactone", "hydrochlorothiazide", "diuretic",
    "blood pressure medication", "heart medication", "cardiologist", "cardiology",
    "heart rate", "resting heart rate", "blood pressure", "systolic", "diastolic",
    "blood pressure cuff", "ldl cholesterol", "hdl cholesterol", "triglycerides",
    "heart healthy diet", "cardiac diet", "cad", "chd", "chf",
]

_CVD_TRIM = {
    "sudden cardiac death", "ischemic heart disease", "dilated cardiomyopathy",
    "hypertrophic cardiomyopathy", "rheumatic fever", "kawasaki disease",
    "cor pulmonale", "preserved ejection fraction", "sick sinus syndrome",
    "sinus arrhythmia", "variant angina", "microvascular angina",
    "hypertensive crisis", "low blood pressure", "carotid stenosis",
    "claudication", "aortic regurgitation", "tricuspid regurgitation",
    "leaky valve", "marfan syndrome", "ministroke", "hyperlipidemia",
    "dyslipidemia", "metabolic syndrome", "pitting edema", "cyanosis",
    "quadruple bypass", "maze procedure", "watchman device", "drug eluting stent",
    "stent placement", "ct angiogram", "calcium score", "tilt table test",
    "transesophageal echocardiogram", "cardiac mri", "d dimer", "impella",
    "balloon pump", "intra aortic balloon pump", "ecmo", "swan ganz catheter",
    "pericardium", "endocardium", "purkinje fibers", "femoral artery",
    "bisoprolol", "enalapril", "ramipril", "arb", "ezetimibe", "rosuvastatin",
    "apixaban", "rivaroxaban", "amiodarone", "hydrochlorothiazide",
    "spironolactone",
}
CVD_TERMS = [t for t in CVD_TERMS if t not in _CVD_TRIM]

SYMPTOMS = {
    "<depression>": [
        "depression", "depressed", "depressive episode", "major depression",
        "feeling down", "feeling hopeless", "hopelessness", "hopeless",
        "low mood", "depressed mood", "feeling depressed", "deep sadness",
        "persistent sadness", "sad all the time", "crying spells", "tearful all day",
        "feeling worthless", "worthlessness", "feeling like a failure",
        "little interest in things", "loss of interest", "lost interest in everything",
        "anhedonia", "nothing brings joy", "cannot enjoy anything",
        "feeling empty inside", "emptiness", "numb inside", "feeling numb",
        "no energy to get up", "no motivation", "zero motivation",
        "cannot get out of bed", "staying in bed all day", "sleeping all day",
        "oversleeping", "moving in slow motion", "self loathing",
        "feeling like a burden", "social withdrawal",
    ],
    "<anxiety>": [
        "anxiety", "anxious", "anxiousness", "feeling anxious",
        "panic", "panic attack", "panic attacks", "anxiety attack", "anxiety attacks",
        "panicking", "constant worry", "worrying too much", "cannot stop worrying",
        "excessive worry", "worried sick", "feeling on edge", "on edge all day",
        "restlessness", "feeling restless", "feeling jittery", "jittery", "antsy",
        "feeling doomed", "sense of doom", "impending doom", "nervous wreck",
        "nervousness", "trembling hands", "trembling", "shaky hands",
        "hyperventilating", "hyperventilation", "lack of concentration",
        "nausea from nerves", "throwing up from stress", "dread everything",
        "overthinking everything", "catastrophizing", "fear of dying", "health anxiety",
    ],
    "<bipolar>": [
        "bipolar", "bipolar disorder", "manic", "mania", "manic episode",
        "manic episodes", "hypomania", "hypomanic", "mood swings", "cycling moods",
        "rapid cycling", "mixed episode", "mood episodes", "elevated mood",
        "euphoric highs", "euphoria", "crash after the high", "racing thoughts",
        "thoughts racing", "talking too fast", "pressured speech", "flight of ideas",
        "grand ideas", "grandiosity", "grandiose plans", "feeling invincible",
        "spending sprees", "impulsive spending", "reckless decisions", "risky behavior",
        "no need for sleep", "barely need sleep", "up all night with energy",
        "bursts of energy", "extreme irritability", "irritable mood",
        "uncontrollable energy", "wired and restless", "highs and lows", "mood crash",
    ],
    "<ptsd>": [
        "ptsd", "post traumatic stress", "trauma", "traumatic memories",
        "flashback", "flashbacks", "vivid flashbacks", "nightmare", "nightmares",
        "recurring nightmares", "night terrors", "waking up screaming",
        "cold sweats from dreams", "hypervigilance", "hypervigilant",
        "always on guard", "easily startled", "startle response",
        "jumpy at loud noises", "intrusive memories", "intrusive thoughts",
        "reliving the trauma", "reliving it over and over", "trauma triggers",
        "triggered by reminders", "avoiding reminders", "avoidance",
        "dissociation", "dissociative episodes", "feeling detached from myself",
        "emotional numbness", "survivor guilt", "combat trauma", "car crash trauma",
        "cannot feel safe anywhere", "scanning for exits", "on high alert",
        "panic at sirens", "frozen in fear", "body remembers the trauma",
    ],
}

GENDER = {
    "<woman>": [
        "she", "her", "hers", "herself", "woman", "women", "girl", "girls",
        "female", "females", "lady", "ladies", "gal", "gals",
        "mother", "mom", "mommy", "mum", "mama", "grandma", "grandmother", "granny",
        "sister", "daughter", "daughters", "aunt", "auntie", "niece", "wife",
        "girlfriend", "fiancee", "bride", "widow", "stepmom", "stepmother",
        "mrs", "ms", "miss", "madam", "ma'am", "bachelorette", "queen", "princess",
        "duchess", "actress", "waitress", "hostess", "heroine", "housewife",
        "maiden", "matriarch", "godmother", "daughter in law", "mother in law",
    ],
    "<man>": [
        "he", "him", "his", "himself", "man", "men", "boy", "boys",
        "male", "males", "gentleman", "gentlemen", "guy", "guys", "dude", "fella",
        "lad", "lads", "father", "dad", "daddy", "papa", "pops", "grandpa",
        "grandfather", "gramps", "brother", "son", "sons", "uncle", "nephew",
        "husband", "boyfriend", "fiance", "groom", "widower", "stepdad", "stepfather",
        "mr", "sir", "mister", "bachelor", "king", "prince", "duke", "actor",
        "waiter", "hero", "patriarch", "godfather", "son in law", "father in law",
    ],
}

CVD_HEADER = """\
# Stand-in cardiovascular-disease lexicon (category: cvd).
# One entry per line: surface<TAB>concept<TAB>category. Surfaces are matched
# case-insensitively on word boundaries; multi-word surfaces match across
# single spaces. All entries map to the single concept <cvd> and are used for
# corpus filtering only, never for masking.
"""

SYMPTOM_HEADER = """\
# Stand-in symptom lexicon (category: symptom).
# Surfaces are phrased after the screening-questionnaire style wording for the
# four classes (depressed mood items -> <depression>, worry/panic items ->
# <anxiety>, mania items -> <bipolar>, re-experiencing/arousal items ->
# <ptsd>). Mapping choices that could be argued either way (e.g. somatic
# complaints such as "nausea from nerves") are assigned to the class whose
# questionnaire mentions them and are deliberately explicit here rather than
# inherited from any external ontology.
"""

GENDER_HEADER = """\
# Stand-in gendered-words lexicon (category: gender).
# Personal and possessive pronouns, kinship terms, titles, and role nouns,
# each tagged <man> or <woman>. Age-gender shorthand ("29f", "f29", "[29F]")
# is handled by a built-in rule that keeps the digits and masks the letter;
# bare single letters are never matched.
"""


def write(path, header, rows):
    lines = [header]
    for surface, concept, category in rows:
        assert "\t" not in surface
        lines.append(f"{surface}\t{concept}\t{category}\n")
    path.write_text("".join(lines), encoding="utf-8")


def main():
    DATA.mkdir(parents=True, exist_ok=True)

    assert len(CVD_TERMS) == len(set(CVD_TERMS)), "duplicate cvd surface"
    assert len(CVD_TERMS) == 250, f"cvd count = {len(CVD_TERMS)}"
    write(DATA / "cvd.tsv", CVD_HEADER, [(t, "<cvd>", "cvd") for t in CVD_TERMS])

    rows = []
    seen = set()
    for concept, surfaces in SYMPTOMS.items():
        assert len(surfaces) == 40, f"{concept}: {len(surfaces)}"
        for s in surfaces:
            assert s not in seen, f"duplicate symptom surface {s}"
            seen.add(s)
            rows.append((s, concept, "symptom"))
    write(DATA / "symptoms.tsv", SYMPTOM_HEADER, rows)

    rows = []
    seen = set()
    for concept, surfaces in GENDER.items():
        for s in surfaces:
            assert s not in seen, f"duplicate gender surface {s}"
            seen.add(s)
            rows.append((s, concept, "gender"))
    write(DATA / "gender.tsv", GENDER_HEADER, rows)

    print("cvd:", len(CVD_TERMS))
    print("symptom:", sum(len(v) for v in SYMPTOMS.values()))
    print("gender:", sum(len(v) for v in GENDER.values()))


if __name__ == "__main__":
    main()
