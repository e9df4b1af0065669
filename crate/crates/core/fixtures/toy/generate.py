"""Regenerates the toy fixture. Output is deterministic."""

import json
import random

LABELS = [
    ("CNTT - Phần mềm (IT - Software)", ["lập_trình", "phần_mềm", "java", "python", "api", "backend"]),
    ("Bán hàng / Kinh doanh (Sales / Business Development)", ["bán_hàng", "doanh_số", "khách_hàng", "chốt_đơn", "kinh_doanh", "hợp_đồng"]),
    ("Kế toán / Kiểm toán (Accounting / Auditing / Tax)", ["kế_toán", "hóa_đơn", "thuế", "sổ_sách", "báo_cáo_tài_chính", "kiểm_toán"]),
    ("Tiếp thị / Marketing (Marketing)", ["marketing", "thương_hiệu", "quảng_cáo", "chiến_dịch", "nội_dung", "seo"]),
    ("Nhân sự (Human Resources)", ["tuyển_dụng", "nhân_sự", "phỏng_vấn", "lương", "đào_tạo", "phúc_lợi"]),
]
FILLER = ["công_ty", "làm_việc", "nhân_viên", "kinh_nghiệm", "năm", "tại", "hà_nội", "có", "và", "yêu_cầu"]

TITLES = [line.split("\t")[0] for line in open("../../data/job_titles.txt", encoding="utf-8")]


def record(rng, idx, prefix):
    k = rng.choice([1, 1, 2, 2, 3])
    chosen = sorted(rng.sample(range(len(LABELS)), k))
    words = []
    for c in chosen:
        words += rng.sample(LABELS[c][1], 3)
    words += rng.sample(FILLER, 3)
    rng.shuffle(words)
    return {
        "id": f"{prefix}-{idx:03d}",
        "description": " ".join(words).capitalize() + ".",
        "labels": [LABELS[c][0] for c in chosen],
        "language": "vi",
    }


def main():
    rng = random.Random(20231017)
    with open("train.jsonl", "w", encoding="utf-8") as f:
        for i in range(50):
            f.write(json.dumps(record(rng, i, "toy"), ensure_ascii=False) + "\n")
    with open("test.jsonl", "w", encoding="utf-8") as f:
        for i in range(12):
            f.write(json.dumps(record(rng, i, "toytest"), ensure_ascii=False) + "\n")

    with open("catalog.txt", "w", encoding="utf-8") as f:
        for title, _ in LABELS:
            assert title in TITLES, title
            vi, en = title[: title.index(" (")], title[title.index("(") + 1 : -1]
            f.write(f"{title}\t{vi}\t{en}\n")

    tokens = sorted({w for _, ws in LABELS for w in ws[:4]} | set(FILLER[:6]))
    with open("vectors.txt", "w", encoding="utf-8") as f:
        f.write(f"{len(tokens)} 8\n")
        for t in tokens:
            f.write(t + " " + " ".join(f"{rng.uniform(-0.5, 0.5):.6f}" for _ in range(8)) + "\n")


if __name__ == "__main__":
    main()
