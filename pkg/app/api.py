# app/api.py
from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, RedirectResponse

try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

from core.errors import AnchorLabError, ConfigError, ParameterError, ParseError
from core.family import certify, lambdas_positive, make_pvector, named_pvector, synthesize
from core.hduality import named_certificate, named_weights, psd_margin, verify_duality
from core.hmatrix import named_hmatrix, to_dump
from core.orchestrator import PRESETS, run_experiment
from core.schemas import ALL_METHODS, loads_config, unknown_name_message

# ---------------- Config ----------------
API_DEBUG = os.getenv("API_DEBUG", "0") == "1"
MAX_CONFIG_BYTES = int(os.getenv("API_MAX_CONFIG_BYTES", "65536"))
USER_ERRORS = (ConfigError, ParameterError, ParseError)

app = FastAPI(title="anchorlab API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=os.getenv("CORS_ALLOW_ORIGINS", "*").split(","),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _error(e: Exception) -> JSONResponse:
    status = 400 if isinstance(e, USER_ERRORS) else 500
    content = {"ok": False, "error": str(e)}
    if API_DEBUG:
        content["debug"] = {"type": type(e).__name__}
    return JSONResponse(status_code=status, content=content)


# ---------------- Endpoints ----------------
@app.get("/", include_in_schema=False)
async def root():
    return RedirectResponse(url="/docs")


@app.get("/health", tags=["health"])
async def health():
    return {
        "ok": True,
        "status": "healthy",
        "methods": list(ALL_METHODS),
        "presets": sorted(PRESETS),
        "debug": API_DEBUG,
    }


@app.post("/synthesize", tags=["family"])
def synthesize_endpoint(
    N: int = Form(..., description="Número de avaliações (N >= 3)"),
    gamma: Optional[float] = Form(None, description="Interpolação Dual-OHM (0) ↔ OHM (1)"),
    p: Optional[str] = Form(None, description="Vetor p separado por vírgulas (N-1 entradas)"),
):
    """H-matriz ótima da família para o p informado, com o certificado de prova."""
    try:
        if (gamma is None) == (p is None):
            raise ConfigError("informe exatamente um de gamma ou p")
        if p is not None:
            pv = make_pvector([float(x) for x in p.split(",") if x.strip()])
            if pv.N != N:
                raise ConfigError(f"p tem {len(pv.p)} entradas; N={N} exige {N - 1}")
        else:
            pv = named_pvector("interpolate", N, gamma)
        H = synthesize(pv)
        cert = certify(H, pv)
    except ValueError as e:
        return _error(e if isinstance(e, AnchorLabError) else ConfigError(str(e)))
    except Exception as e:
        return _error(e)
    summary = cert.summary()
    summary["lambdas_positive"] = lambdas_positive(cert)
    return {"ok": True, "error": None, "hmatrix": to_dump(H), "certificate": summary}


@app.post("/verify", tags=["certificates"])
def verify_endpoint(
    method: str = Form(..., description="OHM | DualOHM | family"),
    N: int = Form(..., description="Horizonte"),
    gamma: float = Form(0.5, description="Só para method=family"),
):
    try:
        key = method.replace("-", "").replace("_", "").lower()
        if key == "family":
            pv = named_pvector("interpolate", N, gamma)
            cert = certify(synthesize(pv), pv)
            body = cert.summary()
            body["lambdas_positive"] = lambdas_positive(cert)
            passed = cert.passed and body["lambdas_positive"]
        elif key in ("ohm", "dualohm"):
            Q, psd = named_certificate(method, N)
            duality = verify_duality(named_hmatrix("OHM", N), named_weights("OHM", N))
            body = {"psd": psd, "min_eig": psd_margin(Q), "duality": duality.summary()}
            passed = psd and duality.sign_agrees
        else:
            raise ConfigError(unknown_name_message("método", method, ("OHM", "DualOHM", "family")))
    except Exception as e:
        return _error(e)
    return {"ok": True, "error": None, "method": method, "N": N, "passed": bool(passed), **body}


@app.post("/run", tags=["experiments"])
async def run_endpoint(
    file: UploadFile = File(..., description="Config do experimento (.json ou .toml)"),
):
    """Executa o experimento sem escrever arquivos; devolve o relatório resumido."""
    try:
        raw = await file.read()
    except Exception as e:
        return JSONResponse(status_code=400, content={"ok": False, "error": f"falha ao receber o arquivo: {e}"})
    finally:
        try:
            await file.close()
        except Exception:
            pass
    if len(raw) > MAX_CONFIG_BYTES:
        return _error(ConfigError(f"config maior que {MAX_CONFIG_BYTES} bytes"))

    name = file.filename or "config.json"
    fmt = "toml" if name.lower().endswith(".toml") else "json"
    try:
        cfg = loads_config(raw.decode("utf-8"), fmt=fmt)
        report = run_experiment(cfg, write=False)
    except UnicodeDecodeError as e:
        return _error(ConfigError(f"config não é UTF-8: {e}"))
    except Exception as e:
        return _error(e)
    return {"ok": True, "error": None, "config": name, "report": report.summary()}
