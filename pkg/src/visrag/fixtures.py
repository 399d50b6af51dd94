"""Synthetic patient-portal corpus for desk-scale runs.

``write_fixture(out_dir)`` produces::

    out_dir/corpus/<doc_id>/manifest.json     20 bundles, 70 images in total
    out_dir/corpus/<doc_id>/images/*.bin      synthetic image payloads
    out_dir/corpus/<doc_id>/images/*.{caption,ocr}.txt   sidecars echoed by the mock provider
    out_dir/queries.jsonl                     19 evaluation questions
    out_dir/calibration.json                  pinned vectors for the worked eCheck-In example
    out_dir/visrag.json                       CLI config: mock providers + calibration
    out_dir/published_scores.csv                        published per-question scores for --from-scores

Documents flagged ``visual`` keep their procedure out of the page text: the steps
only appear in the screenshot captions and OCR sidecars.

The ``echeckin`` document carries the worked example from the published study:
its page-2 screenshot sits next to the cancel/reschedule passage and has the
LLM caption and OCR texts as sidecars. The calibration table pins the example
question, that screenshot, and its caption/OCR embeddings so the record's
components come out as text 0.15, image 0.333, caption 0.592, OCR 0.615.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from visrag.documents import DocumentBundle, ImageAsset, Page, TextBlock, sha256_hex, write_manifest

QUESTIONS = [
    ("q01", "How do I download the MyChart mobile app?"),
    ("q02", "What steps do I need to follow to sign up for a myHealth Online account using an activation code?"),
    ("q03", "How can I reset my myHealth Online password if I've forgotten it?"),
    ("q04", "Where do I find my medication list in myHealth Online?"),
    ("q05", "How do I request a medication refill through myHealth Online?"),
    ("q06", "How can I view my test results in the mobile app?"),
    ("q07", "What is the process for joining a video visit using my smartphone?"),
    ("q08", "How do I access questionnaires before my appointment?"),
    ("q09", "What steps should I follow to schedule a new appointment?"),
    ("q10", "How can I cancel or reschedule an existing appointment?"),
    ("q11", "What does the eCheck-in process look like before an appointment?"),
    ("q12", "How do I send a message to my care team?"),
    ("q13", "Where do I go to update my personal information?"),
    ("q14", "How can I change my notification preferences?"),
    ("q15", "What steps do I follow to access my child's immunization record?"),
    ("q16", "How do I view and grant proxy access to family members?"),
    ("q17", "What is the process for revoking proxy access for someone who should no longer have access to my record?"),
    ("q18", "How can I use Share Everywhere to share my medical information with providers outside my network?"),
    ("q19", "Where do I find my referrals in the myHealth Online portal?"),
]

# Published per-question normalized scores, one column per method.
SCORE_METHODS = [
    "text_only", "text_image", "caption_blip", "caption_vit_gpt2", "caption_sonnet", "ocr_tesseract", "ocr_sonnet",
]
PUBLISHED_SCORES = [
    (0.188, 0.204, 0.306, 0.285, 0.316, 0.324, 0.329),
    (0.250, 0.290, 0.313, 0.251, 0.422, 0.428, 0.434),
    (0.208, 0.252, 0.284, 0.245, 0.352, 0.384, 0.383),
    (0.250, 0.246, 0.281, 0.245, 0.351, 0.380, 0.372),
    (0.250, 0.263, 0.274, 0.238, 0.346, 0.384, 0.375),
    (0.273, 0.251, 0.314, 0.275, 0.330, 0.339, 0.340),
    (0.333, 0.298, 0.336, 0.325, 0.379, 0.356, 0.361),
    (0.188, 0.222, 0.272, 0.250, 0.332, 0.367, 0.355),
    (0.150, 0.215, 0.300, 0.212, 0.379, 0.400, 0.408),
    (0.278, 0.282, 0.366, 0.259, 0.391, 0.404, 0.406),
    (0.200, 0.246, 0.295, 0.234, 0.386, 0.416, 0.427),
    (0.300, 0.287, 0.340, 0.272, 0.339, 0.368, 0.385),
    (0.222, 0.228, 0.268, 0.283, 0.310, 0.325, 0.331),
    (0.143, 0.203, 0.286, 0.208, 0.356, 0.371, 0.379),
    (0.227, 0.228, 0.275, 0.234, 0.304, 0.354, 0.328),
    (0.273, 0.240, 0.264, 0.265, 0.341, 0.341, 0.348),
    (0.235, 0.240, 0.270, 0.218, 0.287, 0.283, 0.290),
    (0.250, 0.288, 0.391, 0.279, 0.468, 0.464, 0.483),
    (0.318, 0.289, 0.340, 0.261, 0.398, 0.402, 0.399),
]

# Worked example: question, the record's surrounding text, caption and OCR sidecars,
# and the component values its calibration reproduces.
EXAMPLE_QID = "q11"
EXAMPLE_QUESTION = QUESTIONS[10][1]
EXAMPLE_CONTEXT = (
    "cancel or reschedule an appointment depending on the date and time of your upcoming appointment, "
    "you may be able to cancel it through myhealth online. follow-up appointments in internal medicine, "
    "family medicine, and general pediatrics can be rescheduled online rather than cancelling if you still "
    "need the appointment, but at a different date or time. myhealth online toolbar in the mobile app "
    "1. select the appointment from the list or click details 2. click cancel and confirm cancellation "
    "or click resched"
)
EXAMPLE_CAPTION = (
    "This image shows a medical appointment interface for a virtual visit. It displays appointment details "
    "for a Family Medicine Physician at 7:00 AM, options for eCheck-In, review instructions for a remote "
    'consultation, and a highlighted "Begin visit" button for starting a video call.'
)
EXAMPLE_OCR = (
    "Appointments, Starts at 7:00 AM 15 minutes Cancel Appt Add to Calendar; Family Medicine Physician, MD, "
    "GET READY; eCheck-In Save time at your appointment by updating some of your information now. Begin "
    "Review Instructions - Please do not come to the clinic. -Someone from the clinic will be calling you. "
    "-Please have the required information ready when the clinic calls you. Connecting to your video visit, "
    "Begin visit"
)
EXAMPLE_VIDEO_TEXT = (
    "the mobile app is the best way to join but if you need to join using your computer: visits>my visits "
    "appointment will display you can • echeck-in (confirm your information and things like allergies) "
    "tap details to join or get instructions on joining a video visit you click to begin video visit up to "
    "an hour befor the visit tap the link for detailed instructions on joining a video visit"
)
EXAMPLE_COMPONENTS = {"text_match": 0.15, "image_sim": 0.333, "caption_sim": 0.592, "ocr_sim": 0.615}
EXAMPLE_RECORD = "echeckin/echeckin-p2-visit"

GENERIC_TEXT = [
    "The screens in this section are taken from the portal. Each screenshot shows one stage of the task.",
    "Compare your screen with the pictures shown here. Screens can look slightly different on tablets.",
    "If something on your screen does not match, contact the support desk during business hours.",
]


@dataclass(frozen=True)
class Screen:
    image_id: str
    caption: str | None
    ocr: str | None


@dataclass(frozen=True)
class Topic:
    doc_id: str
    title: str
    qid: str | None
    visual: bool
    pages: tuple[tuple, ...]  # each page: sequence of str (text block) or Screen


def _screen(doc: str, n: int, caption: str | None, ocr: str | None) -> Screen:
    return Screen(f"{doc}-img{n}", caption, ocr)


def _visual_topic(doc: str, qid: str, title: str, task: str, screens: list[tuple[str, str]]) -> Topic:
    """Procedure lives only in the screenshots; page text stays generic."""
    shots = [
        _screen(doc, i + 1, f"This image shows the {name} screen in myHealth Online, the step where you {task}.", ocr)
        for i, (name, ocr) in enumerate(screens)
    ]
    half = (len(shots) + 1) // 2
    page1 = (title, GENERIC_TEXT[0], *shots[:half], GENERIC_TEXT[1])
    page2 = (*shots[half:], GENERIC_TEXT[2])
    return Topic(doc, title, qid, True, (page1, page2))


def _text_topic(doc: str, qid: str | None, title: str, body: list[str], screens: list[tuple[str | None, str | None]]) -> Topic:
    shots = [_screen(doc, i + 1, cap, ocr) for i, (cap, ocr) in enumerate(screens)]
    page1: list = [title, body[0]]
    page2: list = []
    for i, shot in enumerate(shots):
        (page1 if i < 2 else page2).append(shot)
    page1.extend(body[1:2])
    page2.extend(body[2:])
    pages = (tuple(page1), tuple(page2)) if page2 else (tuple(page1),)
    return Topic(doc, title, qid, False, pages)


def _topics() -> list[Topic]:
    t: list[Topic] = []
    t.append(_visual_topic("mobile-app", "q01", "Getting the app", "download and install the MyChart mobile app", [
        ("App Store search", "App Store Search MyChart Download the MyChart mobile app GET Install"),
        ("MyChart app listing", "MyChart Epic Systems Download Open How do I download the MyChart mobile app"),
        ("organization picker", "MyChart Find your organization myHealth Online Santa Clara Valley Select"),
    ]))
    t.append(_text_topic("signup", "q02", "Signing up", [
        "To sign up for a myHealth Online account you need the activation code printed on your after visit summary.",
        "Go to the sign up page, enter the activation code, your date of birth and the last four digits of your "
        "social security number, then follow the steps to create a username and password.",
        "Activation codes expire after 90 days. Request a new code at the front desk if yours has expired.",
    ], [
        ("Sign up page with the activation code field and the Next button.", "Sign Up Activation Code Next"),
        ("Personal verification form asking for date of birth.", "Verify Your Identity Date of Birth Next"),
        ("Username and password creation form.", "Create Username Password Confirm Password Sign In"),
    ]))
    t.append(_visual_topic("password-reset", "q03", "Account help", "reset your myHealth Online password if you have forgotten it", [
        ("sign in", "myHealth Online Sign In Username Password Forgot password? Forgot username?"),
        ("forgot password", "Forgot password? Reset your myHealth Online password if you have forgotten it "
                            "Enter your username and date of birth Next"),
        ("password reset code", "Reset password Check your email for a reset code Enter code Submit"),
        ("new password", "Create a new myHealth Online password Your forgotten password has been reset Sign In"),
    ]))
    t.append(_visual_topic("medications", "q04", "Your health summary", "find your medication list in myHealth Online", [
        ("Health menu", "Menu Health Medications Test Results Allergies Immunizations"),
        ("medication list", "Medications Current medication list Where do I find my medication list Prescribed by"),
        ("medication details", "Medication details Dose Instructions Learn more"),
    ]))
    t.append(_visual_topic("refills", "q05", "Pharmacy", "request a medication refill through myHealth Online", [
        ("Medications", "Medications Request refills Select medication"),
        ("refill request", "Request a medication refill through myHealth Online Select medications to refill Next"),
        ("pharmacy selection", "Choose pharmacy Pickup Mail order Next"),
        ("refill confirmation", "Refill request submitted Your care team will review your medication refill request"),
    ]))
    t.append(_text_topic("test-results", "q06", "Test results", [
        "You can view your test results in the mobile app as soon as your provider releases them.",
        "Open the app, tap Test Results on the home screen and select a result to see the values and reference ranges.",
        "Some results are released only after your provider has reviewed them with you.",
    ], [
        ("Mobile app home screen with the Test Results shortcut.", "Test Results Messages Visits Medications"),
        ("List of test results sorted by date.", "Test Results Complete Blood Count Lipid Panel"),
        (None, None),
    ]))
    t.append(_text_topic("video-visits", "q07", "Video visits", [
        "To join a video visit using your smartphone, install the mobile app and sign in before the appointment.",
        "At the appointment time open Visits, select the video visit and tap Begin Visit. Allow access to the "
        "camera and microphone when prompted.",
        "Test your smartphone camera and microphone a day before the video visit.",
    ], [
        ("Video visit card with the Begin Visit button.", "Video Visit Begin Visit Test Video"),
        ("Camera and microphone permission prompt.", "Allow camera Allow microphone"),
        ("Waiting room for the video visit.", "Waiting for your provider to join"),
        (None, None),
    ]))
    t.append(_visual_topic("questionnaires", "q08", "Preparing for a visit", "access questionnaires before your appointment", [
        ("upcoming appointment", "Upcoming appointment Questionnaires Access questionnaires before your appointment"),
        ("questionnaires", "Questionnaires Health history Depression screening Start"),
        ("questionnaire form", "Questionnaire Answer each question Continue Submit"),
        ("questionnaire submitted", "Questionnaires complete Thank you before your appointment"),
    ]))
    t.append(_visual_topic("scheduling", "q09", "Appointments", "schedule a new appointment by following the steps", [
        ("Visits menu", "Visits Schedule an Appointment Upcoming Past"),
        ("reason for visit", "Schedule a new appointment Steps to follow Why are you scheduling Reason"),
        ("available times", "Select a time New appointment Morning Afternoon"),
    ]))
    t.append(_text_topic("cancel-reschedule", "q10", "Changing appointments", [
        "You can cancel or reschedule an existing appointment online if it is more than 24 hours away.",
        "Open Visits, select the existing appointment and choose Cancel or Reschedule. Pick a new date and time "
        "to reschedule, or confirm the cancellation.",
        "Appointments within 24 hours must be cancelled by phone.",
    ], [
        ("Appointment details with Cancel and Reschedule buttons.", "Appointment Details Cancel Reschedule"),
        ("Reschedule calendar with open slots.", "Reschedule Select a new date"),
        ("Cancellation confirmation dialog.", "Cancel appointment Are you sure Confirm"),
    ]))
    # worked example document
    t.append(Topic("echeckin", "eCheck-In", "q11", False, (
        ("eCheck-In and video visits", EXAMPLE_VIDEO_TEXT,
         Screen("echeckin-p1-visits", "Visits list with an upcoming video visit and the Details button.",
                "Visits My Visits Upcoming Details")),
        (EXAMPLE_CONTEXT, Screen("echeckin-p2-visit", EXAMPLE_CAPTION, EXAMPLE_OCR)),
        ("Complete eCheck-In up to seven days before the visit to confirm insurance and allergies.",
         Screen("echeckin-p3-insurance", "Insurance review form during eCheck-In.", "Insurance Confirm Next"),
         Screen("echeckin-p3-allergies", "Allergy review step with Mark as reviewed.", "Allergies Mark as reviewed")),
    )))
    t.append(_text_topic("messages", "q12", "Messaging", [
        "Send a message to your care team for non-urgent medical questions.",
        "Open Messages, choose Send a message, pick your care team and the topic, type the message and select Send.",
        "Care team replies usually arrive within two business days.",
    ], [
        ("Messages inbox with the Send a message button.", "Messages Inbox Send a message"),
        ("Recipient picker listing care team members.", "To: Care team Choose recipient"),
        ("Compose form with subject and message body.", "Subject Message Send"),
        (None, None),
    ]))
    t.append(_text_topic("personal-info", "q13", "Account settings", [
        "Go to Account Settings, then Personal Information, to update your address, phone and email.",
        "Select Edit next to the section you want to update, save the personal information and confirm.",
    ], [
        ("Account settings menu.", "Account Settings Personal Information Security"),
        ("Personal information form with Edit buttons.", "Personal Information Address Phone Email Edit"),
        ("Saved confirmation banner.", "Your changes have been saved"),
    ]))
    t.append(_visual_topic("notifications", "q14", "Staying informed", "change your notification preferences", [
        ("account settings", "Account Settings Communication preferences Notification"),
        ("notification preferences", "Change notification preferences Email Text message Push notification"),
        ("preference toggles", "Notification preferences Appointments Messages Test results On Off"),
        ("preferences saved", "Your notification preferences were changed Save"),
    ]))
    t.append(_text_topic("immunizations", "q15", "Immunizations", [
        "Parents with proxy access can view a child's immunization record.",
        "Switch to your child's account with the profile picker, open Health, then Immunizations, to access the "
        "immunization record and download an official copy.",
        "Schools may require the official immunization record rather than a screenshot.",
    ], [
        ("Profile picker with child's account.", "Switch account Child"),
        ("Immunization list with dates.", "Immunizations MMR Tdap Influenza"),
        ("Official record download.", "Download immunization record PDF"),
        ("Print preview of the immunization record.", "Print Immunization Record"),
    ]))
    t.append(_text_topic("proxy-grant", "q16", "Proxy access", [
        "Proxy access lets family members view and manage your record.",
        "To grant proxy access, open Sharing Hub, select Friends and Family Access, then invite the family "
        "member by email and choose what they can view.",
        "You can view everyone with proxy access on the same page.",
    ], [
        ("Sharing Hub page.", "Sharing Hub Friends and Family Access"),
        ("Invite form for a family member.", "Invite Name Email Access level"),
        ("List of people with proxy access.", "Who can see my record"),
    ]))
    t.append(_visual_topic("proxy-revoke", "q17", "Managing who sees your chart", "revoke proxy access for someone who should no longer have access to your record", [
        ("Friends and Family Access", "Friends and Family Access Who can access my record Proxy"),
        ("proxy person details", "Proxy access Revoke access Someone should no longer have access to my record"),
        ("revoke confirmation", "Revoke proxy access Are you sure Confirm revoking"),
        ("access removed", "Proxy access has been revoked This person no longer has access to your record"),
    ]))
    t.append(_text_topic("share-everywhere", "q18", "Share Everywhere", [
        "Share Everywhere lets you share your medical information with providers outside your network.",
        "Open Share Everywhere, generate a share code, and give the code and your date of birth to the provider "
        "outside your network so they can view your medical information.",
        "Share codes expire after one hour.",
    ], [
        ("Share Everywhere start page.", "Share Everywhere Get a share code"),
        ("Generated share code.", "Share code Expires in 60 minutes"),
        ("Provider view entry page.", "Enter share code Date of birth View"),
    ]))
    t.append(_text_topic("referrals", "q19", "Referrals", [
        "Find your referrals in the myHealth Online portal under Health, then Referrals.",
        "Each referral shows the referred-to provider, status, and the number of visits authorized.",
    ], [
        ("Health menu with the Referrals entry.", "Health Referrals"),
        ("Referral list with statuses.", "Referrals Approved Pending"),
        ("Referral details page.", "Referral details Visits authorized"),
        ("Referral letter download.", "Download letter"),
    ]))
    t.append(_text_topic("billing", None, "Billing", [
        "Pay your bill online from the Billing Summary page.",
        "Select Pay Now, choose the amount and the payment method, and confirm the payment.",
    ], [
        ("Billing summary.", "Billing Summary Amount due Pay Now"),
        ("Payment form.", "Payment amount Card number Confirm"),
        ("Payment receipt.", "Thank you Receipt"),
    ]))
    return t


VISUAL_ANSWER_QIDS = tuple(sorted(t.qid for t in _topics() if t.visual and t.qid))


def _payload(doc_id: str, image_id: str) -> bytes:
    seed = hashlib.sha256(f"{doc_id}/{image_id}".encode()).digest()
    return b"VISRAG-SYNTHETIC-IMAGE\x00" + seed * 8


def _layout(items: tuple) -> tuple[list[TextBlock], list[tuple[Screen, tuple]]]:
    """Stack items top to bottom, one horizontal band each."""
    n = len(items)
    blocks, shots = [], []
    for i, item in enumerate(items):
        box = (0.05, round(i / n, 6), 0.95, round((i + 0.9) / n, 6))
        if isinstance(item, Screen):
            shots.append((item, box))
        else:
            blocks.append(TextBlock(len(blocks), item, box))
    return blocks, shots


def write_corpus(corpus_dir: str | Path) -> list[DocumentBundle]:
    corpus_dir = Path(corpus_dir)
    bundles = []
    for topic in _topics():
        root = corpus_dir / topic.doc_id
        (root / "images").mkdir(parents=True, exist_ok=True)
        pages = []
        for number, items in enumerate(topic.pages, 1):
            blocks, shots = _layout(items)
            images = []
            for shot, box in shots:
                data = _payload(topic.doc_id, shot.image_id)
                rel = f"images/{shot.image_id}.bin"
                (root / rel).write_bytes(data)
                for kind, text in (("caption", shot.caption), ("ocr", shot.ocr)):
                    if text is not None:
                        (root / "images" / f"{shot.image_id}.{kind}.txt").write_text(text + "\n", encoding="utf-8")
                images.append(ImageAsset(shot.image_id, number, rel, sha256_hex(data), box))
            pages.append(Page(number, tuple(blocks), tuple(images)))
        bundle = DocumentBundle(topic.doc_id, f"synthetic://portal-guide/{topic.doc_id}", tuple(pages), root)
        write_manifest(bundle)
        bundles.append(bundle)
    return bundles


def calibration_table(dim: int = 512) -> dict:
    """Unit vectors in a private 4-slot subspace: the question sits on slot 0 and each
    of image / caption / OCR has cosine equal to its target component with it."""

    def toward(target: float, slot: int) -> list[list[float]]:
        return [[0, target], [slot, math.sqrt(1.0 - target * target)]]

    image_hash = sha256_hex(_payload("echeckin", "echeckin-p2-visit"))
    return {
        "dim": dim,
        "text": {
            EXAMPLE_QUESTION: [[0, 1.0]],
            EXAMPLE_CAPTION: toward(EXAMPLE_COMPONENTS["caption_sim"], 2),
            EXAMPLE_OCR: toward(EXAMPLE_COMPONENTS["ocr_sim"], 3),
        },
        "image": {image_hash: toward(EXAMPLE_COMPONENTS["image_sim"], 1)},
    }


def write_fixture(out_dir: str | Path, dim: int = 512) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / "corpus")
    with open(out / "queries.jsonl", "w", encoding="utf-8") as fh:
        for qid, question in QUESTIONS:
            fh.write(json.dumps({"qid": qid, "question": question}) + "\n")
    (out / "calibration.json").write_text(json.dumps(calibration_table(dim), indent=1) + "\n", encoding="utf-8")
    mock = {"kind": "mock", "dim": dim, "calibration": "calibration.json"}
    config = {
        "providers": {
            "text_embed": mock,
            "image_embed": mock,
            "caption": mock,
            "ocr": mock,
            "sentence_sim": {**mock, "model_id": "multi-qa-mpnet-base-dot-v1"},
        },
        "window_chars": 512,
        "k": 10,
        "sim_threshold": 0.95,
        "max_per_doc": 2,
        "schemes": ["text_only", "text_image", "text_image_caption", "full"],
    }
    (out / "visrag.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    with open(out / "published_scores.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["qid", "question", *SCORE_METHODS])
        for (qid, question), row in zip(QUESTIONS, PUBLISHED_SCORES):
            writer.writerow([qid, question, *(f"{v:.3f}" for v in row)])
    return out
