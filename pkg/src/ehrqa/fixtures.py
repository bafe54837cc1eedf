"""Deterministic fixture builders: demo databases in MIMIC-like and
OMOP-like shapes, clinical notes, benchmark datasets, and the scripted
backend rule file that makes the whole pipeline run offline.

Everything here is synthetic. ``ensure_fixtures`` materializes any missing
artifact into a directory; the repo ships the generated files so tests and
the CLI work out of the box.
"""

from __future__ import annotations

import json
import os
import sqlite3
from pathlib import Path
from typing import Optional

MIMIC_DB = "mimic_demo.db"
OMOP_DB = "omop_demo.db"
NOTES_FILE = "notes.jsonl"
BENCHMARK_FILE = "benchmark_multimodal.jsonl"
EHRNOTEQA_FILE = "benchmark_ehrnoteqa.jsonl"
EHRSQL_FILE = "benchmark_ehrsql.jsonl"
SCRIPT_FILE = "scripted_replies.json"
HOSTILE_SQL_FILE = "hostile_sql.json"
CONFIG_FILE = "config.yaml"

SLOW_QUERY = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c"


def default_fixtures_dir() -> Path:
    env = os.environ.get("EHRQA_FIXTURES_DIR")
    if env:
        return Path(env)
    return Path.cwd() / "fixtures"


# ---------------------------------------------------------------------------
# databases
# ---------------------------------------------------------------------------

_MIMIC_DDL = """
CREATE TABLE patients (
    subject_id INTEGER PRIMARY KEY,
    gender TEXT,
    dob TEXT
);
CREATE TABLE admissions (
    hadm_id INTEGER PRIMARY KEY,
    subject_id INTEGER REFERENCES patients(subject_id),
    admittime TEXT,
    dischtime TEXT,
    admission_type TEXT
);
CREATE TABLE prescriptions (
    row_id INTEGER PRIMARY KEY,
    subject_id INTEGER REFERENCES patients(subject_id),
    hadm_id INTEGER REFERENCES admissions(hadm_id),
    startdate TEXT,
    drug TEXT,
    dose_val_rx TEXT,
    dose_unit_rx TEXT,
    route TEXT
);
CREATE TABLE labevents (
    row_id INTEGER PRIMARY KEY,
    subject_id INTEGER REFERENCES patients(subject_id),
    hadm_id INTEGER REFERENCES admissions(hadm_id),
    charttime TEXT,
    label TEXT,
    valuenum REAL,
    valueuom TEXT
);
"""

_MIMIC_ROWS = {
    "patients": [
        (10001, "F", "2090-03-15 00:00:00"),
        (10002, "M", "2085-07-01 00:00:00"),
        (10003, "F", "2101-11-23 00:00:00"),
        (10004, "M", "2079-02-09 00:00:00"),
    ],
    "admissions": [
        (20001, 10001, "2126-05-01 10:00:00", "2126-05-10 14:00:00", "EMERGENCY"),
        (20002, 10001, "2126-08-12 09:30:00", "2126-08-20 16:00:00", "ELECTIVE"),
        (20003, 10002, "2127-01-03 22:15:00", "2127-01-09 11:00:00", "EMERGENCY"),
        (20004, 10003, "2125-12-20 08:00:00", "2125-12-28 12:00:00", "URGENT"),
    ],
    "prescriptions": [
        (1, 10001, 20001, "2126-05-02 08:00:00", "Aspirin", "81", "mg", "PO"),
        (2, 10001, 20001, "2126-05-03 08:00:00", "Metoprolol", "25", "mg", "PO"),
        (3, 10001, 20002, "2126-08-13 09:00:00", "Aspirin", "325", "mg", "PO"),
        (4, 10002, 20003, "2127-01-04 10:00:00", "Vancomycin", "1000", "mg", "IV"),
        (5, 10002, 20003, "2127-01-05 10:00:00", "Vancomycin", "1250", "mg", "IV"),
        (6, 10003, 20004, "2125-12-21 07:30:00", "Insulin", "10", "units", "SC"),
        (7, 10003, 20004, "2125-12-22 07:30:00", "Warfarin", "5", "mg", "PO"),
    ],
    "labevents": [
        (1, 10001, 20001, "2126-05-02 06:00:00", "WBC", 11.2, "K/uL"),
        (2, 10001, 20001, "2126-05-04 06:00:00", "WBC", 9.8, "K/uL"),
        (3, 10001, 20002, "2126-08-13 06:30:00", "Hemoglobin", 10.4, "g/dL"),
        (4, 10002, 20003, "2127-01-04 05:45:00", "Creatinine", 1.4, "mg/dL"),
        (5, 10002, 20003, "2127-01-06 05:45:00", "Creatinine", 1.1, "mg/dL"),
        (6, 10003, 20004, "2125-12-21 06:10:00", "Glucose", 182.0, "mg/dL"),
        (7, 10003, 20004, "2125-12-23 06:10:00", "Glucose", 140.0, "mg/dL"),
        (8, 10002, 20003, "2127-01-07 05:45:00", "Vancomycin trough", 14.8, "ug/mL"),
    ],
}

_OMOP_DDL = """
CREATE TABLE concept (
    concept_id INTEGER PRIMARY KEY,
    concept_name TEXT,
    domain_id TEXT
);
CREATE TABLE person (
    person_id INTEGER PRIMARY KEY,
    gender_concept_id INTEGER REFERENCES concept(concept_id),
    year_of_birth INTEGER
);
CREATE TABLE visit_occurrence (
    visit_occurrence_id INTEGER PRIMARY KEY,
    person_id INTEGER REFERENCES person(person_id),
    visit_concept_id INTEGER REFERENCES concept(concept_id),
    visit_start_datetime TEXT,
    visit_end_datetime TEXT
);
CREATE TABLE drug_exposure (
    drug_exposure_id INTEGER PRIMARY KEY,
    person_id INTEGER REFERENCES person(person_id),
    drug_concept_id INTEGER REFERENCES concept(concept_id),
    drug_source_value TEXT,
    quantity REAL,
    drug_exposure_start_datetime TEXT
);
CREATE TABLE measurement (
    measurement_id INTEGER PRIMARY KEY,
    person_id INTEGER REFERENCES person(person_id),
    measurement_concept_id INTEGER REFERENCES concept(concept_id),
    measurement_source_value TEXT,
    value_as_number REAL,
    measurement_datetime TEXT
);
"""

_OMOP_ROWS = {
    "concept": [
        (8507, "MALE", "Gender"),
        (8532, "FEMALE", "Gender"),
        (9201, "Inpatient Visit", "Visit"),
        (9203, "Emergency Room Visit", "Visit"),
        (1112807, "aspirin", "Drug"),
        (3004249, "troponin", "Measurement"),
    ],
    "person": [
        (1, 8532, 1952),
        (2, 8507, 1948),
    ],
    "visit_occurrence": [
        (100, 1, 9203, "2023-02-10 08:20:00", "2023-02-14 12:00:00"),
        (101, 2, 9201, "2023-03-02 15:00:00", "2023-03-09 10:30:00"),
    ],
    "drug_exposure": [
        (1000, 1, 1112807, "aspirin 81 mg oral tablet", 1.0, "2023-02-10 20:00:00"),
        (1001, 2, 1112807, "aspirin 325 mg oral tablet", 1.0, "2023-03-03 08:00:00"),
    ],
    "measurement": [
        (5000, 1, 3004249, "troponin", 0.04, "2023-02-10 09:00:00"),
        (5001, 1, 3004249, "troponin", 0.02, "2023-02-12 09:00:00"),
    ],
}


def _build_db(path: Path, ddl: str, rows: dict[str, list[tuple]]) -> None:
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        conn.executescript(ddl)
        for table, table_rows in rows.items():
            if not table_rows:
                continue
            placeholders = ", ".join("?" for _ in table_rows[0])
            conn.executemany(f"INSERT INTO {table} VALUES ({placeholders})", table_rows)
        conn.commit()
    finally:
        conn.close()


def build_mimic_db(path: str | Path) -> Path:
    path = Path(path)
    _build_db(path, _MIMIC_DDL, _MIMIC_ROWS)
    return path


def build_omop_db(path: str | Path) -> Path:
    path = Path(path)
    _build_db(path, _OMOP_DDL, _OMOP_ROWS)
    return path


# ---------------------------------------------------------------------------
# notes
# ---------------------------------------------------------------------------

_NOTES = [
    {
        "id": "n1001a",
        "patient": "10001",
        "timestamp": "2126-05-10 13:00:00",
        "text": (
            "Admission for chest pain. The patient was started on aspirin 81 mg daily and "
            "metoprolol 25 mg daily. White count was mildly elevated on admission and trended "
            "down by hospital day three. Discharge Medications: aspirin 81 mg daily, metoprolol "
            "25 mg daily. Follow up with cardiology in two weeks."
        ),
    },
    {
        "id": "n1001b",
        "patient": "10001",
        "timestamp": "2126-08-20 15:30:00",
        "text": (
            "Elective admission for catheterization. Aspirin increased to 325 mg daily after the "
            "procedure. Hemoglobin was 10.4 on post-procedure labs and remained stable. No "
            "bleeding complications were observed. Discharge Medications: aspirin 325 mg daily."
        ),
    },
    {
        "id": "n1001c",
        "patient": "10001",
        "timestamp": "2126-08-21 09:00:00",
        "text": (
            "Nursing note. The patient ambulated without difficulty and tolerated a regular diet. "
            "Education was provided on the increased aspirin dose."
        ),
    },
    {
        "id": "n1002a",
        "patient": "10002",
        "timestamp": "2127-01-06 11:45:00",
        "text": (
            "Infectious disease consult. Vancomycin was started on hospital day two for "
            "bacteremia and the dose was increased from 1000 mg to 1250 mg after a subtherapeutic "
            "level. Creatinine improved from 1.4 to 1.1 while on therapy. The trough on day four "
            "was 14.8, within goal range."
        ),
    },
    {
        "id": "n1002b",
        "patient": "10002",
        "timestamp": "2127-01-09 10:15:00",
        "text": (
            "Discharge summary. The patient completed intravenous antibiotics without renal "
            "injury. Discharge Medications: oral antibiotics to complete a fourteen day course. "
            "Repeat labs in one week."
        ),
    },
    {
        "id": "n1003a",
        "patient": "10003",
        "timestamp": "2125-12-24 14:20:00",
        "text": (
            "Progress note. Insulin 10 units subcutaneous nightly was started for persistent "
            "hyperglycemia; glucose improved from 182 to 140 over two days. Warfarin 5 mg was "
            "added for atrial fibrillation with a plan to check INR in three days."
        ),
    },
    {
        "id": "n1003b",
        "patient": "10003",
        "timestamp": "2125-12-28 11:00:00",
        "text": (
            "Discharge summary. Blood sugars were controlled at discharge. Discharge Medications: "
            "insulin 10 units nightly, warfarin 5 mg daily. Anticoagulation clinic follow up "
            "arranged."
        ),
    },
]


def write_notes(path: str | Path) -> Path:
    path = Path(path)
    path.write_text("\n".join(json.dumps(n, ensure_ascii=False) for n in _NOTES) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# 20-item multimodal benchmark + scripted replies
# ---------------------------------------------------------------------------

# (qid, patient, category, question, sql, note evidence snippet, response)
_BENCHMARK = [
    (
        "q001", "10001", "drug",
        "What was the last aspirin dose for patient 10001?",
        "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = :patient_id "
        "AND drug = 'Aspirin' ORDER BY startdate DESC LIMIT 1",
        "[2126-08-20T15:30:00+00:00] Aspirin increased to 325 mg daily after the procedure.",
        "The last aspirin dose for patient 10001 was 325 mg.",
    ),
    (
        "q002", "10001", "lab",
        "How did the WBC count change for patient 10001 during the May admission?",
        "SELECT charttime, valuenum FROM labevents WHERE subject_id = 10001 AND label = 'WBC' ORDER BY charttime",
        "[2126-05-10T13:00:00+00:00] White count was mildly elevated on admission and trended down.",
        "WBC fell from 11.2 to 9.8 K/uL between 2126-05-02 and 2126-05-04.",
    ),
    (
        "q003", "10002", "drug",
        "Did vancomycin dosing change for patient 10002?",
        "SELECT startdate, dose_val_rx FROM prescriptions WHERE subject_id = 10002 AND drug = 'Vancomycin' ORDER BY startdate",
        "[2127-01-06T11:45:00+00:00] The dose was increased from 1000 mg to 1250 mg.",
        "Yes, vancomycin increased from 1000 mg to 1250 mg on 2127-01-05.",
    ),
    (
        "q004", "10002", "lab_drug_combination",
        "How did creatinine respond after vancomycin started for patient 10002?",
        "SELECT charttime, valuenum FROM labevents WHERE subject_id = 10002 AND label = 'Creatinine' ORDER BY charttime",
        "[2127-01-06T11:45:00+00:00] Creatinine improved from 1.4 to 1.1 while on therapy.",
        "Creatinine improved from 1.4 to 1.1 mg/dL after vancomycin started.",
    ),
    (
        "q005", "10003", "lab",
        "What was the glucose trend for patient 10003?",
        "SELECT charttime, valuenum FROM labevents WHERE subject_id = 10003 AND label = 'Glucose' ORDER BY charttime",
        "[2125-12-24T14:20:00+00:00] Glucose improved from 182 to 140 over two days.",
        "Glucose decreased from 182 to 140 mg/dL over two days.",
    ),
    (
        "q006", "10003", "drug",
        "What dose of insulin was ordered for patient 10003?",
        "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = 10003 AND drug = 'Insulin'",
        "[2125-12-24T14:20:00+00:00] Insulin 10 units subcutaneous nightly was started.",
        "Insulin 10 units subcutaneously was ordered on 2125-12-21.",
    ),
    (
        "q007", "10001", "other",
        "How many admissions does patient 10001 have on record?",
        "SELECT count(*) FROM admissions WHERE subject_id = 10001",
        "(none relevant)",
        "Patient 10001 has 2 admissions on record.",
    ),
    (
        "q008", "10002", "lab",
        "What was the vancomycin trough level for patient 10002?",
        "SELECT valuenum, valueuom FROM labevents WHERE subject_id = 10002 AND label = 'Vancomycin trough'",
        "[2127-01-06T11:45:00+00:00] The trough on day four was 14.8, within goal range.",
        "The vancomycin trough was 14.8 ug/mL on 2127-01-07.",
    ),
    (
        "q009", "10001", "drug",
        "Which medications were started during the first admission of patient 10001?",
        "SELECT drug FROM prescriptions WHERE hadm_id = 20001 ORDER BY startdate",
        "[2126-05-10T13:00:00+00:00] Started on aspirin 81 mg daily and metoprolol 25 mg daily.",
        "Aspirin and metoprolol were started during the first admission.",
    ),
    (
        "q010", "10001", "lab",
        "What was the hemoglobin value for patient 10001 in August?",
        "SELECT valuenum, valueuom FROM labevents WHERE subject_id = 10001 AND label = 'Hemoglobin'",
        "[2126-08-20T15:30:00+00:00] Hemoglobin was 10.4 on post-procedure labs.",
        "Hemoglobin was 10.4 g/dL on 2126-08-13.",
    ),
    (
        "q011", "10003", "drug",
        "Was warfarin prescribed for patient 10003?",
        "SELECT drug, dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = 10003 AND drug = 'Warfarin'",
        "[2125-12-24T14:20:00+00:00] Warfarin 5 mg was added for atrial fibrillation.",
        "Yes, warfarin 5 mg daily was prescribed on 2125-12-22.",
    ),
    (
        "q012", "10002", "other",
        "What type of admission was recorded for patient 10002?",
        "SELECT admission_type FROM admissions WHERE subject_id = 10002",
        "(none relevant)",
        "Patient 10002 had an emergency admission.",
    ),
    (
        "q013", "10001", "lab_drug_combination",
        "Did the WBC count fall after medications were started for patient 10001?",
        "SELECT charttime, valuenum FROM labevents WHERE subject_id = 10001 AND label = 'WBC' ORDER BY charttime",
        "[2126-05-10T13:00:00+00:00] White count trended down by hospital day three.",
        "Yes, WBC fell from 11.2 to 9.8 K/uL after medications were started.",
    ),
    (
        "q014", "10002", "drug",
        "What route was used for vancomycin in patient 10002?",
        "SELECT DISTINCT route FROM prescriptions WHERE subject_id = 10002 AND drug = 'Vancomycin'",
        "[2127-01-09T10:15:00+00:00] The patient completed intravenous antibiotics.",
        "Vancomycin was given intravenously.",
    ),
    (
        "q015", "10003", "lab_drug_combination",
        "Did glucose improve after insulin started for patient 10003?",
        "SELECT charttime, valuenum FROM labevents WHERE subject_id = 10003 AND label = 'Glucose' ORDER BY charttime",
        "[2125-12-24T14:20:00+00:00] Glucose improved from 182 to 140 over two days.",
        "Yes, glucose fell from 182 to 140 mg/dL after insulin started.",
    ),
    (
        "q016", "10001", "drug",
        "What dose of metoprolol was given to patient 10001?",
        "SELECT dose_val_rx, dose_unit_rx FROM prescriptions WHERE subject_id = 10001 AND drug = 'Metoprolol'",
        "[2126-05-10T13:00:00+00:00] Metoprolol 25 mg daily was started.",
        "Metoprolol 25 mg orally was given starting 2126-05-03.",
    ),
    (
        "q017", "10003", "other",
        "When was patient 10003 discharged?",
        "SELECT dischtime FROM admissions WHERE subject_id = 10003",
        "[2125-12-28T11:00:00+00:00] Blood sugars were controlled at discharge.",
        "Patient 10003 was discharged on 2125-12-28.",
    ),
    (
        "q018", "10002", "lab_drug_combination",
        "Was the vancomycin trough therapeutic for patient 10002?",
        "SELECT valuenum FROM labevents WHERE subject_id = 10002 AND label = 'Vancomycin trough'",
        "[2127-01-06T11:45:00+00:00] The trough on day four was 14.8, within goal range.",
        "The trough of 14.8 ug/mL was within the therapeutic range.",
    ),
    (
        "q019", "10001", "lab",
        "List the lab tests recorded for patient 10001.",
        "SELECT DISTINCT label FROM labevents WHERE subject_id = 10001 ORDER BY label",
        "(none relevant)",
        "Patient 10001 had WBC and Hemoglobin tests recorded.",
    ),
    (
        "q020", "10002", "drug",
        "How many vancomycin doses are recorded for patient 10002?",
        "SELECT count(*) FROM prescriptions WHERE subject_id = 10002 AND drug = 'Vancomycin'",
        "[2127-01-06T11:45:00+00:00] Vancomycin was started on hospital day two.",
        "There are 2 vancomycin doses recorded for patient 10002.",
    ),
]

TABLE_DESCRIPTIONS = {
    "patients": "Demographics master table; one row per patient with gender and date of birth, keyed by subject_id.",
    "admissions": "Hospital admissions; one row per stay with admit/discharge times and admission type, linked to patients by subject_id.",
    "prescriptions": "Medication orders with drug name, dose value and unit, route, and start date, linked to patients and admissions.",
    "labevents": "Laboratory results with test label, numeric value, unit, and chart time, linked to patients and admissions.",
}

INSUFFICIENT_QUESTION = "Is there any note evidence about allergies for patient 10004?"


def write_benchmark(path: str | Path) -> Path:
    path = Path(path)
    rows = []
    for qid, patient, category, question, sql, _snippet, response in _BENCHMARK:
        rows.append(
            {
                "id": qid,
                "question": question,
                "patient_scope": patient,
                "category": category,
                "modality": "multimodal",
                "gold_answer": response,
                "gold_sql": sql,
            }
        )
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in rows) + "\n", encoding="utf-8")
    return path


def write_script(path: str | Path) -> Path:
    path = Path(path)
    rules = []
    for i, (table, description) in enumerate(sorted(TABLE_DESCRIPTIONS.items())):
        rules.append(
            {
                "role_tag": "table_reviewer",
                "substring_pattern": f"Table Name: {table}",
                "reply_text": description,
                "latency_ms": 30 + i,
            }
        )
    for i, (qid, _patient, _category, question, sql, snippet, response) in enumerate(_BENCHMARK):
        rules.append(
            {
                "role_tag": "sql_writer",
                "substring_pattern": question,
                "reply_text": f"SQLQuery: {sql}\nSQLResult:",
                "latency_ms": 40 + i,
            }
        )
        rules.append(
            {
                "role_tag": "answer_synthesizer",
                "substring_pattern": question,
                "reply_text": (
                    f"1. SQL QUERY: {sql}\n"
                    f"2. Evidence from notes: {snippet}\n"
                    f"2. Response: {response}"
                ),
                "latency_ms": 60 + i,
            }
        )
    for i, row in enumerate(_EHRNOTEQA_ROWS):
        key = row["answer"]
        choices = row.get("choices") or {
            k.split("_", 1)[1]: v for k, v in row.items() if k.startswith("choice_")
        }
        rules.append(
            {
                "role_tag": "note_qa",
                "substring_pattern": row["question"],
                "reply_text": str(choices[key]),
                "latency_ms": 45 + i,
            }
        )
    # the both-empty probe: SQL always fails on schema, no notes exist, and
    # the synthesizer sees "(none)" in both slots
    rules.append(
        {
            "role_tag": "sql_writer",
            "substring_pattern": INSUFFICIENT_QUESTION,
            "reply_text": "SQLQuery: SELECT allergy_list FROM allergy_history WHERE subject_id = 10004",
            "latency_ms": 41,
        }
    )
    rules.append(
        {
            "role_tag": "answer_synthesizer",
            "substring_pattern": "- SQL Query: (none)",
            "reply_text": (
                "1. SQL QUERY: (none)\n"
                "2. Evidence from notes: (none)\n"
                "2. Response: insufficient evidence found"
            ),
            "latency_ms": 55,
        }
    )
    path.write_text(json.dumps(rules, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# loader-shaped fixtures
# ---------------------------------------------------------------------------

_EHRNOTEQA_ROWS = [
    {
        "id": "noteqa-1",
        "patient_scope": "10001",
        "question": "How did the patient tolerate the increased aspirin dose?",
        "choice_A": "The patient tolerated the increased dose without bleeding complications.",
        "choice_B": "The dose was reduced due to gastrointestinal bleeding.",
        "choice_C": "Aspirin was discontinued at discharge.",
        "answer": "A",
    },
    {
        "id": "noteqa-2",
        "patient_scope": "10002",
        "question": "Why was the vancomycin dose increased?",
        "choices": {
            "A": "Because the infection worsened clinically.",
            "B": "Because the trough level was subtherapeutic.",
            "C": "Because renal function improved.",
        },
        "answer": "B",
    },
    {
        "id": "noteqa-3",
        "patient_scope": "10003",
        "question": "What medication was added for atrial fibrillation?",
        "choice_A": "Insulin",
        "choice_B": "Metoprolol",
        "choice_C": "Warfarin",
        "answer": "C",
    },
]


def write_ehrnoteqa(path: str | Path) -> Path:
    path = Path(path)
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in _EHRNOTEQA_ROWS) + "\n", encoding="utf-8")
    return path


_EHRSQL_ROWS = [
    {
        "id": "sql-1",
        "question": "How many patients are on record?",
        "query": "SELECT count(*) FROM patients",
    },
    {
        "id": "sql-2",
        "question": "What is the highest recorded glucose value?",
        "query": "SELECT max(valuenum) FROM labevents WHERE label = 'Glucose'",
    },
    {
        "id": "sql-3",
        "question": "This gold query never finishes.",
        "query": SLOW_QUERY,
    },
]


def write_ehrsql(path: str | Path) -> Path:
    path = Path(path)
    path.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in _EHRSQL_ROWS) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# hostile SQL corpus
# ---------------------------------------------------------------------------

def _hostile_corpus() -> list[dict]:
    rejected = [
        "DROP TABLE patients",
        "DELETE FROM patients",
        "INSERT INTO patients VALUES (99, 'X', '2000-01-01')",
        "UPDATE patients SET gender = 'X'",
        "CREATE TABLE evil (x INTEGER)",
        "ALTER TABLE patients ADD COLUMN evil TEXT",
        "TRUNCATE TABLE patients",
        "REPLACE INTO patients VALUES (99, 'X', '2000-01-01')",
        "VACUUM",
        "PRAGMA journal_mode = DELETE",
        "PRAGMA writable_schema = ON",
        "ATTACH DATABASE '/tmp/evil.db' AS evil",
        "DETACH DATABASE evil",
        "CREATE INDEX evil_idx ON patients(gender)",
        "DROP INDEX evil_idx",
        "CREATE VIEW evil_view AS SELECT * FROM patients",
        "DROP VIEW evil_view",
        "BEGIN TRANSACTION",
        "COMMIT",
        "ROLLBACK",
        "ANALYZE",
        "REINDEX",
        "SAVEPOINT sp1",
        "RELEASE sp1",
        "GRANT ALL ON patients TO PUBLIC",
        "EXEC sp_evil",
        "CREATE TEMP TABLE evil AS SELECT * FROM patients",
        "UPDATE sqlite_master SET sql = 'evil' WHERE name = 'patients'",
        "CREATE TRIGGER evil_trigger AFTER INSERT ON patients BEGIN SELECT 1; END",
        "SELECT 1; DROP TABLE patients",
        "SELECT * FROM patients; DELETE FROM patients",
        "SELECT 1;;DROP TABLE patients",
        "SELECT 1; SELECT 2",
        ";DROP TABLE patients",
        "SELECT 1 /* block */; DROP TABLE admissions",
        "SELECT * FROM sqlite_master; DROP TABLE patients",
        "select * from patients where gender = 'F'; drop table patients --",
        "SELECT 1 -- ; harmless looking\n; DROP TABLE patients",
        "/* harmless */ DROP TABLE labevents",
        "-- just a comment\nDROP TABLE prescriptions",
        "/* SELECT 1 */ DELETE FROM admissions",
        "DROP/**/TABLE patients",
        "INSERT/*x*/INTO patients VALUES (99, 'X', '2000-01-01')",
        "DROP VIEW IF EXISTS v; DROP TABLE patients",
        "WITH x AS (SELECT 1) INSERT INTO patients SELECT 99, 'X', '2000-01-01' FROM x",
        "WITH RECURSIVE b(x) AS (SELECT 90000 UNION ALL SELECT x + 1 FROM b LIMIT 3) "
        "INSERT INTO patients SELECT x, 'X', '2000-01-01' FROM b",
        "DELETE FROM labevents WHERE 1 = 1",
        "UPDATE patients SET dob = (SELECT dob FROM patients LIMIT 1)",
    ]
    corpus = [{"sql": s, "expected": "rejected"} for s in rejected]
    corpus.append({"sql": "SELECT ';DROP TABLE patients' FROM no_such_table", "expected": "schema_error"})
    corpus.append({"sql": "SELECT 1 INTO evil", "expected": "syntax_error"})
    assert len(corpus) == 50
    return corpus


def write_hostile_sql(path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_hostile_corpus(), indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# config + materialization
# ---------------------------------------------------------------------------

def sample_bundle():
    """Deterministic both-arms evidence bundle for golden-prompt checks."""
    from .model import Question, StructuredEvidence, UnstructuredEvidence
    from .notes import ChunkingConfig, chunk_notes, load_notes
    from .synthesis import EvidenceBundle

    qid, patient, category, question_text, sql, _snippet, _response = _BENCHMARK[0]
    question = Question(id=qid, text=question_text, patient_scope=patient, category=category)
    structured = StructuredEvidence(
        sql=sql,
        columns=("dose_val_rx", "dose_unit_rx"),
        rows=(("325", "mg"),),
        attempt_count=1,
    )
    notes_path = default_fixtures_dir() / NOTES_FILE
    if not notes_path.exists():
        write_notes(notes_path)
    notes = [n for n in load_notes(notes_path) if n.patient_scope == patient]
    chunks = chunk_notes(notes, ChunkingConfig())[:2]
    unstructured = UnstructuredEvidence(
        chunks=tuple((chunk, score) for chunk, score in zip(chunks, (0.9, 0.8))),
        k_used=10,
        fallback_mode=False,
    )
    return EvidenceBundle(question=question, structured=structured, unstructured=unstructured)


def write_config(path: str | Path) -> Path:
    path = Path(path)
    text = f"""databases:
  fixture:
    path: {MIMIC_DB}
    profile: fixture
    notes: {NOTES_FILE}
  omop:
    path: {OMOP_DB}
    profile: omop
backend:
  kind: scripted
  script: {SCRIPT_FILE}
  cost_per_1k_tokens: 0.002
embedding:
  kind: hash
  dimension: 64
retrieval:
  k_tables: 10
  k_chunks: 10
chunking:
  chunk_size_tokens: 256
  overlap_tokens: 32
  sentence_aware: true
execution:
  max_attempts: 3
  timeout_s: 120
service:
  bind_host: 127.0.0.1
  bind_port: 8080
"""
    path.write_text(text, encoding="utf-8")
    return path


def ensure_fixtures(directory: Optional[str | Path] = None, force: bool = False) -> Path:
    """Materialize every fixture artifact that is missing (or all, with force)."""
    directory = Path(directory) if directory is not None else default_fixtures_dir()
    directory.mkdir(parents=True, exist_ok=True)
    builders = {
        MIMIC_DB: build_mimic_db,
        OMOP_DB: build_omop_db,
        NOTES_FILE: write_notes,
        BENCHMARK_FILE: write_benchmark,
        EHRNOTEQA_FILE: write_ehrnoteqa,
        EHRSQL_FILE: write_ehrsql,
        SCRIPT_FILE: write_script,
        HOSTILE_SQL_FILE: write_hostile_sql,
        CONFIG_FILE: write_config,
    }
    for name, builder in builders.items():
        target = directory / name
        if force or not target.exists():
            builder(target)
    return directory
