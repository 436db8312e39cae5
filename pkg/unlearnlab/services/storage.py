import json
import os
import tempfile
from pathlib import Path

"""
Escritura atómica de artefactos y utilidades JSONL.
Todo lo que se escribe en disco pasa por atomic_write (temporal + os.replace).
"""


def atomic_write(path, data):
    """
    Escribe bytes o texto en `path` de forma atómica.
    :param path: ruta destino
    :param data: bytes o str (se codifica en UTF-8)
    :return: Path escrito
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode('utf-8')

    # El temporal vive en el mismo directorio para que os.replace sea atómico
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as fh:
            fh.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def dumps_canonical(obj) -> str:
    """JSON estable: claves ordenadas, sin espacios sobrantes."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def write_jsonl(path, rows):
    text = ''.join(json.dumps(row, ensure_ascii=False) + '\n' for row in rows)
    return atomic_write(path, text)


def read_jsonl(path):
    """
    Lee un archivo JSONL ignorando líneas vacías.
    :param path: ruta del archivo
    :return: lista de dicts
    """
    rows = []
    with open(path, 'r', encoding='utf-8') as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
