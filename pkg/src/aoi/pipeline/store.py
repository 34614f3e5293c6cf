"""Object store abstraction: put/get/list/move of byte objects under
path-like keys. Backends: a local filesystem directory (atomic writes via
temp-file + rename) and an S3-compatible service (SigV4, path-style)."""
from __future__ import annotations

import datetime
import hashlib
import hmac
import os
import tempfile
import urllib.parse
import xml.etree.ElementTree as ET
from pathlib import Path

import requests


class StoreError(Exception):
    pass


class KeyMissing(StoreError):
    pass


class StoreUnavailable(StoreError):
    pass


class LocalStore:
    """Filesystem-backed store rooted at a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        p = (self.root / key).resolve()
        if not str(p).startswith(str(self.root.resolve())):
            raise StoreError(f"key {key!r} escapes the store root")
        return p

    def put(self, key: str, data: bytes):
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def get(self, key: str) -> bytes:
        path = self._path(key)
        if not path.is_file():
            raise KeyMissing(key)
        return path.read_bytes()

    def exists(self, key: str) -> bool:
        return self._path(key).is_file()

    def list(self, prefix: str = "") -> list[str]:
        base = self.root
        out = []
        for p in base.rglob("*"):
            if p.is_file() and not p.name.startswith(".tmp-"):
                key = p.relative_to(base).as_posix()
                if key.startswith(prefix):
                    out.append(key)
        return sorted(out)

    def move(self, src: str, dst: str):
        sp = self._path(src)
        if not sp.is_file():
            raise KeyMissing(src)
        dp = self._path(dst)
        dp.parent.mkdir(parents=True, exist_ok=True)
        os.replace(sp, dp)

    def delete(self, key: str):
        path = self._path(key)
        if path.is_file():
            path.unlink()


def _sign(key: bytes, msg: str) -> bytes:
    return hmac.new(key, msg.encode(), hashlib.sha256).digest()


def _uri_encode(s: str, encode_slash: bool) -> str:
    safe = "-_.~" + ("" if encode_slash else "/")
    return urllib.parse.quote(s, safe=safe)


class S3Store:
    """Minimal S3-compatible client (path-style addressing, SigV4)."""

    def __init__(self, endpoint: str, bucket: str, access_key: str, secret_key: str,
                 region: str = "us-east-1", timeout_s: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.bucket = bucket
        self.access_key = access_key
        self.secret_key = secret_key
        self.region = region
        self.timeout_s = timeout_s

    def _request(self, method: str, key: str = "", params: dict | None = None,
                 data: bytes = b"", extra_headers: dict | None = None) -> requests.Response:
        now = datetime.datetime.now(datetime.timezone.utc)
        amz_date = now.strftime("%Y%m%dT%H%M%SZ")
        datestamp = now.strftime("%Y%m%d")
        host = urllib.parse.urlparse(self.endpoint).netloc
        path = "/" + self.bucket + (("/" + key) if key else "")
        payload_hash = hashlib.sha256(data).hexdigest()

        headers = {"host": host, "x-amz-content-sha256": payload_hash, "x-amz-date": amz_date}
        if extra_headers:
            headers.update({k.lower(): v for k, v in extra_headers.items()})
        signed = ";".join(sorted(headers))
        canonical_headers = "".join(f"{k}:{headers[k].strip()}\n" for k in sorted(headers))
        params = params or {}
        canonical_query = "&".join(
            f"{_uri_encode(str(k), True)}={_uri_encode(str(v), True)}"
            for k, v in sorted(params.items()))
        canonical = "\n".join([
            method, _uri_encode(path, False), canonical_query,
            canonical_headers, signed, payload_hash])
        scope = f"{datestamp}/{self.region}/s3/aws4_request"
        string_to_sign = "\n".join([
            "AWS4-HMAC-SHA256", amz_date, scope,
            hashlib.sha256(canonical.encode()).hexdigest()])
        k = _sign(("AWS4" + self.secret_key).encode(), datestamp)
        k = _sign(k, self.region)
        k = _sign(k, "s3")
        k = _sign(k, "aws4_request")
        signature = hmac.new(k, string_to_sign.encode(), hashlib.sha256).hexdigest()
        headers["Authorization"] = (
            f"AWS4-HMAC-SHA256 Credential={self.access_key}/{scope}, "
            f"SignedHeaders={signed}, Signature={signature}")
        url = self.endpoint + path + (("?" + canonical_query) if canonical_query else "")
        try:
            return requests.request(method, url, data=data, headers=headers,
                                    timeout=self.timeout_s)
        except requests.RequestException as e:
            raise StoreUnavailable(str(e)) from e

    def put(self, key: str, data: bytes):
        resp = self._request("PUT", key, data=data)
        if resp.status_code not in (200, 201):
            raise StoreError(f"PUT {key}: status {resp.status_code}")

    def get(self, key: str) -> bytes:
        resp = self._request("GET", key)
        if resp.status_code == 404:
            raise KeyMissing(key)
        if resp.status_code != 200:
            raise StoreError(f"GET {key}: status {resp.status_code}")
        return resp.content

    def exists(self, key: str) -> bool:
        resp = self._request("HEAD", key)
        if resp.status_code == 200:
            return True
        if resp.status_code == 404:
            return False
        raise StoreError(f"HEAD {key}: status {resp.status_code}")

    def list(self, prefix: str = "") -> list[str]:
        keys: list[str] = []
        token = None
        while True:
            params = {"list-type": "2", "prefix": prefix, "max-keys": "1000"}
            if token:
                params["continuation-token"] = token
            resp = self._request("GET", params=params)
            if resp.status_code != 200:
                raise StoreError(f"LIST {prefix}: status {resp.status_code}")
            ns = {"s3": "http://s3.amazonaws.com/doc/2006-03-01/"}
            root = ET.fromstring(resp.content)
            strip = root.tag.startswith("{")
            def find_all(tag):
                return root.findall(f"s3:{tag}" if strip else tag, ns if strip else None)
            for contents in find_all("Contents"):
                k = contents.find("s3:Key" if strip else "Key", ns if strip else None)
                if k is not None and k.text:
                    keys.append(k.text)
            trunc = find_all("IsTruncated")
            token_el = find_all("NextContinuationToken")
            if trunc and trunc[0].text == "true" and token_el:
                token = token_el[0].text
            else:
                break
        return sorted(keys)

    def move(self, src: str, dst: str):
        resp = self._request("PUT", dst, extra_headers={
            "x-amz-copy-source": f"/{self.bucket}/{src}"})
        if resp.status_code == 404:
            raise KeyMissing(src)
        if resp.status_code != 200:
            raise StoreError(f"COPY {src} -> {dst}: status {resp.status_code}")
        self.delete(src)

    def delete(self, key: str):
        resp = self._request("DELETE", key)
        if resp.status_code not in (200, 204, 404):
            raise StoreError(f"DELETE {key}: status {resp.status_code}")


def open_store(url: str):
    """local directory path, or s3://access:secret@endpoint/bucket"""
    if url.startswith("s3://"):
        parsed = urllib.parse.urlparse(url)
        if not parsed.username or not parsed.password:
            raise StoreError("s3 url must carry access:secret credentials")
        scheme = "https" if parsed.port in (None, 443) else "http"
        endpoint = f"{scheme}://{parsed.hostname}" + (f":{parsed.port}" if parsed.port else "")
        bucket = parsed.path.strip("/")
        return S3Store(endpoint, bucket, parsed.username, parsed.password)
    return LocalStore(url)
