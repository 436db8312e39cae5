from django.test import SimpleTestCase, override_settings
from rest_framework.utils import json

from unlearnlab.services.xclients import render_judge_prompt


@override_settings(AUTH_TOKEN=None)
class GatewayTests(SimpleTestCase):

    def post(self, path, payload, **extra):
        return self.client.post(path, data=json.dumps(payload), content_type='application/json', **extra)

    def test_embed(self):
        response = self.post('/embed', {'texts': ['ana was born in oslo.', '']})
        self.assertEqual(response.status_code, 200)
        vectors = response.json()['vectors']
        self.assertEqual(len(vectors), 2)
        self.assertEqual(len(vectors[0]), 256)
        self.assertEqual(vectors[1][0], 1.0)

    def test_nli(self):
        response = self.post('/nli', {'premise': 'ana was born in oslo.', 'hypothesis': 'ana was born in oslo.'})
        self.assertEqual(response.json(), {'label': 'entailment'})

    def test_chat(self):
        prompt = render_judge_prompt('where was ana born?', 'ana was born in oslo.', 'ana was born in lima.')
        self.assertEqual(self.post('/chat', {'prompt': prompt}).json(), {'text': 'YES'})
        prompt = render_judge_prompt('where was ana born?', 'ana was born in oslo.', "i don't know.")
        self.assertEqual(self.post('/chat', {'prompt': prompt}).json(), {'text': 'NO'})

    def test_chat_with_foreign_prompt(self):
        response = self.post('/chat', {'prompt': 'tell me a joke'})
        self.assertEqual(response.status_code, 400)
        self.assertIn('prompt', response.json()['errors'])

    def test_invalid_json(self):
        response = self.client.post('/nli', data='{not json', content_type='application/json')
        self.assertEqual(response.status_code, 400)
        self.assertFalse(response.json()['success'])

    def test_missing_and_unknown_fields(self):
        response = self.post('/nli', {'premise': 'a'})
        self.assertEqual(response.status_code, 400)
        self.assertIn('hypothesis', response.json()['errors'])
        response = self.post('/embed', {'texts': ['a'], 'model': 'big'})
        self.assertEqual(response.status_code, 400)
        self.assertIn('model', response.json()['errors'])

    def test_empty_text_list(self):
        self.assertEqual(self.post('/embed', {'texts': []}).status_code, 400)

    def test_only_post(self):
        self.assertEqual(self.client.get('/embed').status_code, 405)


@override_settings(AUTH_TOKEN='s3cret')
class GatewayAuthTests(SimpleTestCase):

    def post(self, **extra):
        return self.client.post('/nli', data=json.dumps({'premise': 'a', 'hypothesis': 'a'}),
                                content_type='application/json', **extra)

    def test_missing_token(self):
        response = self.post()
        self.assertEqual(response.status_code, 401)
        self.assertIn('auth', response.json()['errors'])

    def test_wrong_token(self):
        self.assertEqual(self.post(HTTP_AUTHORIZATION='Bearer nope').status_code, 401)

    def test_valid_token(self):
        response = self.post(HTTP_AUTHORIZATION='Bearer s3cret')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json(), {'label': 'entailment'})
