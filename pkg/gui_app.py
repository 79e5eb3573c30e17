import os
from pathlib import Path

import numpy as np
import pandas as pd
import streamlit as st
from PIL import Image, ImageDraw

from core import settings
from core.image_io import read_imgf, to_uint8
from managers import ClassManager, JSONLManager
from managers.dataset_manager import decode_owner
from services.export_service import owner_image

st.set_page_config(layout="wide", page_title="Detection Selection Studio")

# Custom CSS for Font Size (No Colors, No Emojis)
st.markdown("""
<style>
    html, body, [class*="css"] {
        font-family: 'Arial', sans-serif;
    }

    .stMarkdown, .stText, p, li, .stCode, .stDataFrame {
        font-size: 1.2rem !important;
        line-height: 1.6 !important;
    }

    h1 { font-size: 2.5rem !important; }
    h2 { font-size: 2.0rem !important; }
    h3 { font-size: 1.75rem !important; }

    .stSelectbox label, .stCheckbox label {
        font-size: 1.2rem !important;
    }
</style>
""", unsafe_allow_html=True)

jsonl_manager = JSONLManager()
class_manager = ClassManager()

st.title("Detection Selection Studio")

artifacts = Path(st.sidebar.text_input("Artifact root", value=os.environ.get("DSA_OUT", str(settings.ARTIFACTS_DIR))))
data_dir = artifacts / "data"

tab_data, tab_dets, tab_reports = st.tabs(["Datasets", "Detections", "Reports"])


def list_subdirs(root: Path):
    return sorted(p.name for p in root.iterdir() if p.is_dir()) if root.is_dir() else []


def scene_image(dataset_dir: Path, record: dict) -> np.ndarray:
    if record.get("image"):
        return read_imgf(dataset_dir / record["image"])
    preview = Image.open(dataset_dir / record["preview"]).convert("RGB")
    return np.asarray(preview, dtype=np.float64) / 255.0


def draw_boxes(image: np.ndarray, dets: list, color=(255, 255, 0)) -> Image.Image:
    canvas = Image.fromarray(to_uint8(image)).convert("RGB")
    draw = ImageDraw.Draw(canvas)
    for det in dets:
        x0, y0, x1, y1 = det["box"]
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=color)
        draw.text((x0 + 2, y0 + 1), f"{det['cls']}:{det['score']:.2f}", fill=color)
    return canvas


# ==============================================================================
# TAB 1: DATASETS
# ==============================================================================
with tab_data:
    st.header("Dataset Viewer")
    datasets = [d for d in list_subdirs(data_dir) if d != settings.DECODER_SUBDIR]
    if not datasets:
        st.warning(f"No datasets under {data_dir}. Run `python DSA_CLI.py gen-data --out {artifacts}` first.")
    else:
        name = st.selectbox("Dataset", datasets)
        dataset_dir = data_dir / name
        records = jsonl_manager.read_jsonl(dataset_dir / settings.MANIFEST_NAME)
        st.text(f"{len(records)} scenes")
        if records:
            ids = [r["id"] for r in records]
            chosen = st.selectbox("Scene", ids)
            record = records[ids.index(chosen)]
            col1, col2 = st.columns(2)
            with col1:
                st.subheader("Image")
                st.image(to_uint8(scene_image(dataset_dir, record)), width=400)
            with col2:
                st.subheader("Visible owners")
                owner = decode_owner(read_imgf(dataset_dir / record["mask"]))
                st.image(to_uint8(owner_image(owner)), width=400)
            st.dataframe(pd.DataFrame([
                {
                    "class": o["cls"],
                    "name": class_manager.get_class_name(o["cls"]),
                    "depth": o["depth_rank"],
                    "rotation": round(o["rotation"], 1),
                    "box": [round(v, 1) for v in box],
                }
                for o, box in zip(record["objects"], record["boxes"])
            ]))

# ==============================================================================
# TAB 2: DETECTIONS
# ==============================================================================
with tab_dets:
    st.header("Detections")
    sources = [f"detections/{d}" for d in list_subdirs(artifacts / "detections")]
    sources += [f"selected/{d}" for d in list_subdirs(artifacts / "selected")]
    if not sources:
        st.warning("No detections yet. Run `simulate` and `postprocess` first.")
    else:
        source = st.selectbox("Source", sources)
        dataset = st.selectbox("Images from", [settings.TEST_SUBDIR, settings.VALIDATION_SUBDIR])
        files = sorted((artifacts / source).glob("*.jsonl"))
        if files:
            scene_id = st.selectbox("Scene", [f.stem for f in files])
            dataset_dir = data_dir / dataset
            records = {r["id"]: r for r in jsonl_manager.read_jsonl(dataset_dir / settings.MANIFEST_NAME)}
            dets = jsonl_manager.read_jsonl(artifacts / source / f"{scene_id}.jsonl")
            if scene_id in records:
                st.image(draw_boxes(scene_image(dataset_dir, records[scene_id]), dets), width=500)
            st.dataframe(pd.DataFrame(dets))
            decisions = artifacts / source / "decisions" / f"{scene_id}.jsonl"
            if decisions.is_file():
                st.subheader("Decision log")
                st.dataframe(pd.DataFrame(jsonl_manager.read_jsonl(decisions)))

# ==============================================================================
# TAB 3: REPORTS
# ==============================================================================
with tab_reports:
    st.header("Experiment Reports")
    scenarios = list_subdirs(artifacts / "experiments")
    if not scenarios:
        st.warning("No experiments yet. Run `python DSA_CLI.py experiment` first.")
    else:
        scenario = st.selectbox("Scenario", scenarios)
        report_path = artifacts / "experiments" / scenario / settings.REPORTS_NAME
        if report_path.is_file():
            st.dataframe(pd.read_csv(report_path))
        scenes = jsonl_manager.read_jsonl(artifacts / "experiments" / scenario / settings.SCENE_LOG_NAME)
        if scenes:
            frame = pd.DataFrame(scenes)
            st.subheader("Accuracy by object count")
            st.dataframe(frame.groupby(["method", "tuned_for", "true_count"])[["boxes_correct", "labels_correct"]].mean())
