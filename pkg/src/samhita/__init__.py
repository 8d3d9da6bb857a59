"""samhita: scanned-book OCR corpora into license-clean instruction datasets.

Stages: license ledger, post-OCR normalization, page-quality routing,
MinHash near-duplicate detection, taxonomy quotas, evidence-anchored
validation with judge escalation, practitioner audits, and dialogue export.
"""

__version__ = "0.1.0"
